import socket
import threading
import time

import pytest
import uvicorn

from paysplit.service.http import create_app


def _free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


class LiveService:
    """A uvicorn instance on a daemon thread, torn down with the fixture."""

    def __init__(self, storage_dir: str):
        self.storage_dir = storage_dir
        self.port = _free_port()
        self.url = f"http://127.0.0.1:{self.port}"
        self._server = uvicorn.Server(
            uvicorn.Config(
                create_app(storage_dir),
                host="127.0.0.1",
                port=self.port,
                log_level="error",
            )
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def start(self) -> "LiveService":
        self._thread.start()
        deadline = time.monotonic() + 10
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("service did not come up")
            time.sleep(0.01)
        return self

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)

    def restart(self) -> "LiveService":
        """Simulates a crash/restart cycle on the same storage and port."""
        self.stop()
        self._server = uvicorn.Server(
            uvicorn.Config(
                create_app(self.storage_dir),
                host="127.0.0.1",
                port=self.port,
                log_level="error",
            )
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        return self.start()


@pytest.fixture
def live_service(tmp_path):
    svc = LiveService(str(tmp_path / "storage")).start()
    yield svc
    svc.stop()
