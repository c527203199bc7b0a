"""Entry point: ``paysplit-service --storage-dir ./groups --port 8040``."""

from __future__ import annotations

import click
import uvicorn

from .http import create_app


@click.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8040, show_default=True, type=int)
@click.option(
    "--storage-dir",
    default="./paysplit-groups",
    show_default=True,
    help="Directory holding per-group snapshots and round logs.",
)
def main(host: str, port: int, storage_dir: str) -> None:
    uvicorn.run(create_app(storage_dir), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
