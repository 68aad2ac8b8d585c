"""HTTP/JSON facade over the platform.

One flat /v1 surface: datasources, datasets, search, annotations,
operations. Every domain error crosses the wire as its original machine
code; statuses are derived from the code, never hand-assigned per
endpoint. Handlers are synchronous on purpose: the platform serializes
through its own locks, and the framework's threadpool gives enough
request concurrency.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from metapix.catalog import Principal, check_access
from metapix.errors import MetapixError, http_status
from metapix.platform import Platform
from metapix.query import materialize, parse
from metapix.search.index import parse_scope

DEFAULT_PAGE = 50
MAX_PAGE = 500


def load_tokens(path: str | Path) -> dict[str, Principal]:
    """Parse the tokens file: ``<token> <user_id> <role1,role2,...>`` per line.

    The roles field is optional; blank lines and #-comments are skipped.
    """
    table: dict[str, Principal] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise MetapixError(
                "STORAGE_IO",
                f"tokens file line {line_no}: expected 'token user roles', got {len(parts)} fields",
                {"line": line_no},
            )
        roles = tuple(r for r in parts[2].split(",") if r) if len(parts) == 3 else ()
        table[parts[0]] = Principal(parts[1], roles)
    return table


def _paginate(items: list, offset: int, limit: int) -> dict:
    offset = max(0, offset)
    limit = DEFAULT_PAGE if limit <= 0 else min(limit, MAX_PAGE)
    page = items[offset : offset + limit]
    has_more = offset + limit < len(items)
    return {
        "items": page,
        "total": len(items),
        "offset": offset,
        "limit": limit,
        "next_offset": offset + limit if has_more else None,
    }


def _require(payload: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in payload]
    if missing:
        raise MetapixError(
            "INVALID_REQUEST",
            f"request body missing {', '.join(missing)}",
            {"missing": missing},
        )


def create_app(platform: Platform, tokens_file: str | Path) -> FastAPI:
    """Wire the /v1 routes around an already constructed platform."""
    tokens = load_tokens(tokens_file)
    app = FastAPI(title="metapix", docs_url=None, redoc_url=None)
    # the browser console is served as static files from another origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["X-Api-Token", "Content-Type"],
    )

    def principal_of(request: Request) -> Principal:
        token = request.headers.get("X-Api-Token")
        if not token:
            raise MetapixError("UNAUTHENTICATED", "missing X-Api-Token header")
        principal = tokens.get(token)
        if principal is None:
            raise MetapixError("UNAUTHENTICATED", "unrecognized token")
        return principal

    auth = Depends(principal_of)

    @app.exception_handler(MetapixError)
    def on_domain_error(request: Request, exc: MetapixError) -> JSONResponse:
        return JSONResponse(status_code=http_status(exc.code), content=exc.to_dict())

    @app.exception_handler(RequestValidationError)
    def on_validation_error(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content={"code": "INVALID_REQUEST", "message": str(exc)},
        )

    def readable_datasource(principal: Principal, datasource_id: str) -> dict:
        record = platform.catalog.get_datasource(datasource_id)
        decision = check_access(principal, record)
        if not decision:
            raise MetapixError("ACCESS_DENIED", decision.reason)
        return record

    def readable_dataset(principal: Principal, dataset_id: str) -> dict:
        record = platform.catalog.get_dataset(dataset_id)
        decision = check_access(principal, record)
        if not decision:
            raise MetapixError("ACCESS_DENIED", decision.reason)
        return record

    # -- datasources -----------------------------------------------------

    @app.post("/v1/datasources")
    def create_datasource(spec: dict, principal: Principal = auth) -> dict:
        spec.setdefault("data_owner", principal.user_id)
        return platform.catalog.create_datasource(spec)

    @app.get("/v1/datasources")
    def list_datasources(
        offset: int = 0, limit: int = DEFAULT_PAGE, principal: Principal = auth
    ) -> dict:
        visible = [
            record
            for record in platform.catalog.list_datasources()
            if check_access(principal, record)
        ]
        return _paginate(visible, offset, limit)

    @app.get("/v1/datasources/{datasource_id}")
    def get_datasource(datasource_id: str, principal: Principal = auth) -> dict:
        return readable_datasource(principal, datasource_id)

    @app.post("/v1/datasources/{datasource_id}/crawl", status_code=202)
    def crawl_datasource(datasource_id: str, principal: Principal = auth) -> dict:
        readable_datasource(principal, datasource_id)
        operation_id = platform.start_crawl(datasource_id)
        return {"operation_id": operation_id, "status": "PENDING"}

    @app.get("/v1/datasources/{datasource_id}/view")
    def view_datasource(
        datasource_id: str,
        query: Optional[str] = None,
        offset: int = 0,
        limit: int = DEFAULT_PAGE,
        principal: Principal = auth,
    ) -> dict:
        readable_datasource(principal, datasource_id)
        view = platform.crawler.build_view(datasource_id)
        rows = view["rows"]
        if query:
            rows = materialize(rows, parse(query))
        body = _paginate(rows, offset, limit)
        body["media_uri_field"] = view["media_uri_field"]
        return body

    # -- datasets --------------------------------------------------------

    @app.post("/v1/datasets")
    def create_dataset(payload: dict, principal: Principal = auth) -> dict:
        mode = payload.get("mode")
        name = payload.get("name")
        if mode == "file-import":
            _require(payload, "manifest_path", "format")
            return platform.catalog.create_dataset_from_file(
                principal, payload["manifest_path"], payload["format"], name=name
            )
        if mode == "query":
            _require(payload, "datasource_id", "query")
            return platform.catalog.create_dataset_from_query(
                principal, payload["datasource_id"], payload["query"], name=name
            )
        if mode == "search-selection":
            _require(payload, "scope", "selections")
            return platform.catalog.create_dataset_from_search(
                principal,
                payload["scope"],
                payload["selections"],
                query_text=payload.get("query_text", ""),
                name=name,
            )
        raise MetapixError(
            "INVALID_REQUEST",
            "mode must be file-import, query, or search-selection",
            {"mode": mode},
        )

    @app.get("/v1/datasets")
    def list_datasets(
        offset: int = 0, limit: int = DEFAULT_PAGE, principal: Principal = auth
    ) -> dict:
        visible = [
            record
            for record in platform.catalog.list_datasets()
            if check_access(principal, record)
        ]
        return _paginate(visible, offset, limit)

    @app.get("/v1/datasets/{dataset_id}")
    def get_dataset(dataset_id: str, principal: Principal = auth) -> dict:
        return readable_dataset(principal, dataset_id)

    @app.post("/v1/datasets/{dataset_id}/versions")
    def add_version(dataset_id: str, changeset: dict, principal: Principal = auth) -> dict:
        return platform.catalog.add_version(principal, dataset_id, changeset)

    @app.get("/v1/datasets/{dataset_id}/lineage")
    def get_lineage(dataset_id: str, principal: Principal = auth) -> dict:
        readable_dataset(principal, dataset_id)
        return platform.catalog.get_lineage(dataset_id)

    # -- annotations -------------------------------------------------------

    @app.post("/v1/datasets/{dataset_id}/versions/{version}/annotations")
    def attach_annotation(
        dataset_id: str, version: int, payload: dict, principal: Principal = auth
    ) -> dict:
        _require(payload, "type", "name", "properties")
        return platform.catalog.attach_annotation(
            principal,
            dataset_id,
            version,
            payload["type"],
            payload["name"],
            payload["properties"],
            make_default=bool(payload.get("make_default", False)),
        )

    @app.get("/v1/datasets/{dataset_id}/versions/{version}/annotations")
    def list_annotations(
        dataset_id: str,
        version: int,
        offset: int = 0,
        limit: int = DEFAULT_PAGE,
        principal: Principal = auth,
    ) -> dict:
        readable_dataset(principal, dataset_id)
        return _paginate(
            platform.annotations.list_annotations(dataset_id, version), offset, limit
        )

    @app.get(
        "/v1/datasets/{dataset_id}/versions/{version}/annotations/{annotation_id}/export"
    )
    def export_annotation(
        dataset_id: str,
        version: int,
        annotation_id: str,
        format: str,
        principal: Principal = auth,
    ) -> dict:
        readable_dataset(principal, dataset_id)
        annotation = platform.annotations.get_annotation(annotation_id)
        if annotation["dataset_id"] != dataset_id or annotation["version"] != version:
            raise MetapixError(
                "NO_ANNOTATIONS",
                f"annotation {annotation_id} is not attached to "
                f"{dataset_id} v{version}",
                {"annotation_id": annotation_id},
            )
        return platform.annotations.export_by_id(annotation_id, format)

    # -- search and operations -----------------------------------------------

    @app.post("/v1/search")
    def run_search(payload: dict, principal: Principal = auth) -> dict:
        _require(payload, "scope", "query")
        scope = parse_scope(payload["scope"])
        if scope.kind == "datasource":
            resource = platform.catalog.get_datasource_for_scope(scope)
        else:
            resource = platform.catalog.get_dataset_for_scope(scope)
        decision = check_access(principal, resource)
        if not decision:
            raise MetapixError("ACCESS_DENIED", decision.reason)
        hits = platform.search(
            payload["scope"],
            payload["query"],
            int(payload.get("k", 10)),
            mode=payload.get("mode", "EXACT"),
        )
        return {
            "scope": payload["scope"],
            "query": payload["query"],
            "hits": [hit.to_dict() for hit in hits],
        }

    @app.get("/v1/operations/{operation_id}")
    def get_operation(operation_id: str, principal: Principal = auth) -> dict:
        return platform.runner.get_operation(operation_id)

    # -- media passthrough (thumbnails for the browser console) -------------

    @app.get("/v1/media/{content_hash}")
    def get_media(content_hash: str, principal: Principal = auth) -> Response:
        data = platform.blobs.get_blob(content_hash)
        return Response(content=data, media_type="application/octet-stream")

    return app


def serve(platform: Platform, tokens_file: str | Path, host: str, port: int) -> None:
    """Blocking single-process server; used by the CLI's serve command."""
    import uvicorn

    uvicorn.run(create_app(platform, tokens_file), host=host, port=port, log_level="warning")
