"""FastAPI front end over the group hosts.

Everything binary rides as unpadded base64url: submission vectors, digest
cores, individual ring words.  Authentication is one bearer token per
member, issued at join time.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .. import wire
from ..config import GroupConfig
from .core import GroupHost, ServiceError, ServiceRegistry


class CreateGroupBody(BaseModel):
    config: dict
    a: str | None = None  # setup constant as a base64url word; defaults to 1


class JoinBody(BaseModel):
    join_secret: str


class LeaveBody(BaseModel):
    attested_zero: bool = False


class SubmissionBody(BaseModel):
    vector: str
    announce: str | None = None


class RevealBody(BaseModel):
    accused: int
    target: int


class ClaimBody(BaseModel):
    claim: str


def _digest_json(view: dict) -> dict:
    core = wire.DigestCore(
        v_prime=view["v_prime"],
        c=view["c"],
        b_entry=view["b_entry"],
        status=view["status"],
    )
    out = {
        "round": view["round"],
        "digest": wire.b64e(wire.encode_digest_core(core)),
        "status": view["status"],
        "value": view["value"],
        "offline": view["offline"],
        "events": view["events"],
        "rolled_back": view["rolled_back"],
        "announce_sum": (
            None
            if view["announce_sum"] is None
            else wire.encode_word(view["announce_sum"])
        ),
    }
    if "member_sums" in view:
        out["member_sums"] = {
            str(i): wire.encode_word(v) for i, v in view["member_sums"].items()
        }
    return out


def create_app(storage_dir: str | Path) -> FastAPI:
    app = FastAPI(title="paysplit wire service")
    registry = ServiceRegistry(storage_dir)
    app.state.registry = registry

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail})

    @app.exception_handler(wire.WireError)
    async def _wire_error(_request: Request, exc: wire.WireError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    async def member_ctx(
        group_id: str, authorization: str | None = Header(default=None)
    ) -> tuple[GroupHost, int]:
        host = registry.get(group_id)
        if not authorization or not authorization.startswith("Bearer "):
            raise ServiceError(401, "missing bearer token")
        index = host.member_for_token(authorization.removeprefix("Bearer "))
        host.ensure_scheduler()
        return host, index

    @app.post("/groups")
    async def create_group(body: CreateGroupBody):
        try:
            config = GroupConfig.from_json(body.config)
        except (ValueError, KeyError) as exc:
            raise ServiceError(422, f"bad group config: {exc}") from exc
        a = 1 if body.a is None else wire.decode_word(body.a)
        host = registry.create(config, a)
        return {"group_id": host.state.group_id, "join_secret": host.join_secret}

    @app.post("/groups/{group_id}/join")
    async def join_group(group_id: str, body: JoinBody):
        host = registry.get(group_id)
        out = host.join(body.join_secret)
        host.ensure_scheduler()
        out["a"] = wire.encode_word(out["a"])
        return out

    @app.get("/groups/{group_id}")
    async def group_info(ctx: tuple = Depends(member_ctx)):
        host, _ = ctx
        out = host.info()
        out["a"] = wire.encode_word(out["a"])
        return out

    @app.post("/groups/{group_id}/leave")
    async def leave_group(body: LeaveBody, ctx: tuple = Depends(member_ctx)):
        host, index = ctx
        return {"leave_round": host.leave(index, body.attested_zero)}

    @app.post("/groups/{group_id}/rounds/{m}/submission")
    async def submit_round(m: int, body: SubmissionBody, ctx: tuple = Depends(member_ctx)):
        host, index = ctx
        data = wire.b64d(body.vector)
        if len(data) % 16:
            raise ServiceError(422, "submission is not a whole number of ring words")
        vector = wire.decode_submission(data, len(data) // 16)
        announce = None if body.announce is None else wire.decode_word(body.announce)
        return await host.submit(index, m, vector, announce)

    @app.get("/groups/{group_id}/rounds/{m}/digest")
    async def fetch_digest(m: int, sums: bool = False, ctx: tuple = Depends(member_ctx)):
        host, index = ctx
        async with host.lock:
            view = host.digest_view(index, m, include_sums=sums)
        return _digest_json(view)

    @app.post("/groups/{group_id}/rounds/{m}/report")
    async def report_error(m: int, ctx: tuple = Depends(member_ctx)):
        host, index = ctx
        async with host.lock:
            return host.report(index, m)

    @app.post("/groups/{group_id}/rounds/{m}/reveal")
    async def reveal_entry(m: int, body: RevealBody, ctx: tuple = Depends(member_ctx)):
        host, _ = ctx
        async with host.lock:
            entry = host.reveal(m, body.accused, body.target)
        return {"round": m, "accused": body.accused, "target": body.target,
                "entry": wire.encode_word(entry)}

    @app.get("/groups/{group_id}/log")
    async def fetch_log(start: int = 0, ctx: tuple = Depends(member_ctx)):
        host, index = ctx
        async with host.lock:
            entries = host.log_slice(index, start)
        return {"entries": [_digest_json(e) for e in entries]}

    @app.post("/groups/{group_id}/settle")
    async def settle(ctx: tuple = Depends(member_ctx)):
        host, _ = ctx
        async with host.lock:
            out = host.settle()
        out["balances"] = {
            i: wire.encode_word(b) for i, b in out["balances"].items()
        }
        return out

    @app.post("/groups/{group_id}/settle/claim")
    async def put_claim(body: ClaimBody, ctx: tuple = Depends(member_ctx)):
        host, index = ctx
        async with host.lock:
            host.put_claim(index, wire.decode_word(body.claim))
        return {"ok": True}

    @app.get("/groups/{group_id}/settle/claims")
    async def fetch_claims(ctx: tuple = Depends(member_ctx)):
        host, _ = ctx
        async with host.lock:
            out = host.claims_view()
        out["claims"] = {i: wire.encode_word(v) for i, v in out["claims"].items()}
        return out

    return app
