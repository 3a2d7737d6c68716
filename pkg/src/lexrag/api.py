"""HTTP/JSON surface over the engine.

Every mutating call is journaled by the engine before it is acknowledged,
and every 4xx/5xx body carries a machine-readable ``code`` from the
closed error enumeration. Role auth is static bearer tokens mapped to
roles in the service config.
"""

from __future__ import annotations

import logging
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import Depends, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.security.utils import get_authorization_scheme_param
from pydantic import BaseModel, ConfigDict, Field

from .config import ApiConfig
from .engine import LegalEngine
from .errors import LexragError

logger = logging.getLogger(__name__)

#: HTTP status for each domain error code; anything unlisted is a 500.
STATUS_BY_CODE = {
    "validation_error": 400,
    "parse_error": 400,
    "degenerate_input": 400,
    "mapping_error": 400,
    "configuration_error": 400,
    "undefined_metric": 400,
    "dimension_mismatch": 400,
    "auth_missing": 401,
    "auth_invalid": 401,
    "role_forbidden": 403,
    "not_found": 404,
    "conflict": 409,
    "illegal_transition": 409,
    "index_empty": 409,
    "grounding_required": 409,
    "embedding_lookup": 409,
    "backend_unreachable": 502,
}

ALL_ROLES = ("Consultant", "Researcher", "Advisor", "Paralegal", "Admin")


class QueryRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    text: str = Field(min_length=1)


class ReviewRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    verdict: str
    notes: str = ""


class FinalizeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    template_id: str = "default"


class FeedbackRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    case_id: str
    response_id: str | None = None
    relevance: float | None = Field(default=None, ge=0.0, le=1.0)
    accuracy: float | None = Field(default=None, ge=0.0, le=1.0)
    compliance: float | None = Field(default=None, ge=0.0, le=1.0)
    satisfaction: float | None = Field(default=None, ge=0.0, le=1.0)
    qualitative_label: str | None = None
    comment: str | None = None


class UpdatePolicyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    force: bool = False


def _error_response(code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=STATUS_BY_CODE.get(code, 500),
        content={"code": code, "message": message},
    )


def create_app(engine: LegalEngine, config: ApiConfig) -> FastAPI:
    """Build the service over an engine instance."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        if config.snapshot_path:
            engine.save(config.snapshot_path)

    app = FastAPI(title="lexrag", version="0.1.0", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.engine = engine

    def role_of(request: Request) -> str:
        authorization = request.headers.get("Authorization", "")
        scheme, token = get_authorization_scheme_param(authorization)
        if not token or scheme.lower() != "bearer":
            raise LookupError("auth_missing")
        role = config.auth_tokens.get(token)
        if role is None:
            raise LookupError("auth_invalid")
        return role

    def require_role(*allowed: str):
        def dependency(request: Request) -> str:
            role = role_of(request)
            if allowed and role not in allowed:
                raise PermissionError(
                    f"role {role!r} may not call this endpoint (needs {', '.join(allowed)})"
                )
            return role

        return dependency

    @app.exception_handler(LexragError)
    async def handle_domain_error(request: Request, exc: LexragError):
        return _error_response(exc.code, exc.message)

    @app.exception_handler(LookupError)
    async def handle_auth_error(request: Request, exc: LookupError):
        code = str(exc) if str(exc) in ("auth_missing", "auth_invalid") else "auth_invalid"
        return _error_response(code, "missing or unknown bearer token")

    @app.exception_handler(PermissionError)
    async def handle_permission_error(request: Request, exc: PermissionError):
        return _error_response("role_forbidden", str(exc))

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return _error_response("validation_error", str(exc.errors()[:3]))

    @app.exception_handler(Exception)
    async def handle_internal(request: Request, exc: Exception):
        logger.exception("internal error on %s", request.url.path)
        return _error_response("internal", f"{type(exc).__name__}")

    # -- endpoints ---------------------------------------------------------------------

    @app.get("/v1/healthz")
    async def healthz():
        return {"status": "ok", "policy_version": engine.gating_net.version}

    @app.post("/v1/query")
    async def query(body: QueryRequest, role: str = Depends(require_role(*ALL_ROLES))):
        return engine.answer_query(body.text, actor=role)

    @app.get("/v1/cases/{case_id}")
    async def get_case(case_id: str, role: str = Depends(require_role(*ALL_ROLES))):
        return engine.case_summary(engine.get_case(case_id))

    @app.post("/v1/cases/{case_id}/review")
    async def review(
        case_id: str, body: ReviewRequest, role: str = Depends(require_role("Advisor"))
    ):
        return engine.review_case(case_id, body.verdict, body.notes, role)

    @app.post("/v1/cases/{case_id}/finalize")
    async def finalize(
        case_id: str, body: FinalizeRequest, role: str = Depends(require_role("Paralegal"))
    ):
        return engine.finalize_case(case_id, body.template_id, role)

    @app.post("/v1/feedback")
    async def feedback(
        body: FeedbackRequest, role: str = Depends(require_role("Advisor", "Paralegal"))
    ):
        payload = body.model_dump(exclude_none=True)
        return engine.submit_feedback(payload, actor_role=role)

    @app.get("/v1/review/queue")
    async def review_queue(role: str = Depends(require_role("Advisor", "Paralegal", "Admin"))):
        return {"items": engine.review_queue()}

    @app.get("/v1/experts")
    async def experts(role: str = Depends(require_role(*ALL_ROLES))):
        return {
            "policy_version": engine.gating_net.version,
            "experts": [
                {
                    "id": p.id,
                    "role": p.role.value,
                    "tasks": sorted(p.tasks),
                    "handler_kind": getattr(p.handler, "kind", None),
                }
                for p in engine.registry.profiles()
            ],
        }

    @app.post("/v1/admin/update-policy")
    async def update_policy(
        body: UpdatePolicyRequest, role: str = Depends(require_role("Admin"))
    ):
        return engine.update_policy(force=body.force)

    @app.get("/v1/metrics")
    async def metrics(role: str = Depends(require_role(*ALL_ROLES))):
        return engine.metrics()

    return app


def build_engine(config: ApiConfig) -> LegalEngine:
    """Load the configured snapshot when present, otherwise fresh-init."""
    if config.snapshot_path and Path(config.snapshot_path).exists():
        return LegalEngine.load(config.snapshot_path)
    return LegalEngine(config.engine)


def serve(config: ApiConfig) -> None:
    """Run the service; binds per config and persists on shutdown."""
    import uvicorn

    engine = build_engine(config)
    app = create_app(engine, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
