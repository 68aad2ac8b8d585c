"""Command-line client for the HTTP API.

Connection settings resolve flag > environment > ~/.metapix, so a
one-time config file covers the common case and scripts can still
override per call. Every command talks to /v1 endpoints only; nothing
here touches the store directly except `serve`, which hosts it.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import click
import requests

DEFAULT_ENDPOINT = "http://127.0.0.1:8047"
CONFIG_FILE = ".metapix"


def _file_settings() -> dict:
    """key=value lines from ~/.metapix; missing file means no settings."""
    path = Path.home() / CONFIG_FILE
    if not path.is_file():
        return {}
    settings = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        settings[key.strip()] = value.strip()
    return settings


def resolve_connection(endpoint: str | None, token: str | None) -> tuple[str, str]:
    settings = _file_settings()
    endpoint = (
        endpoint
        or os.environ.get("METAPIX_ENDPOINT")
        or settings.get("endpoint")
        or DEFAULT_ENDPOINT
    )
    token = token or os.environ.get("METAPIX_TOKEN") or settings.get("token") or ""
    return endpoint.rstrip("/"), token


class Client:
    def __init__(self, endpoint: str, token: str):
        self.endpoint = endpoint
        self.token = token

    def call(self, method: str, path: str, **kwargs):
        headers = {"X-Api-Token": self.token} if self.token else {}
        try:
            response = requests.request(
                method, f"{self.endpoint}/v1{path}", headers=headers,
                timeout=120, **kwargs,
            )
        except requests.RequestException as exc:
            raise click.ClickException(f"cannot reach {self.endpoint}: {exc}")
        if response.status_code >= 400:
            try:
                error = response.json()
            except ValueError:
                raise click.ClickException(
                    f"HTTP {response.status_code}: {response.text[:200]}"
                )
            raise click.ClickException(
                f"{error.get('code', 'ERROR')}: {error.get('message', '')}"
            )
        if response.headers.get("content-type", "").startswith("application/json"):
            return response.json()
        return response.content


pass_state = click.make_pass_decorator(dict)


@click.group()
@click.option("--endpoint", default=None, help="API base URL.")
@click.option("--token", default=None, help="API token.")
@click.option("--json", "as_json", is_flag=True, help="Print raw API responses.")
@click.pass_context
def main(ctx, endpoint, token, as_json):
    """Dataset management from the terminal."""
    endpoint, token = resolve_connection(endpoint, token)
    ctx.obj = {"client": Client(endpoint, token), "json": as_json}


def emit(state: dict, body, lines=None) -> None:
    """Raw JSON under --json, otherwise the human rendering."""
    if state["json"]:
        click.echo(json.dumps(body, indent=2, sort_keys=True))
        return
    for line in lines if lines is not None else [json.dumps(body, sort_keys=True)]:
        click.echo(line)


def _fmt_segment(segment) -> str:
    if not segment:
        return "-"
    return f"{segment['start_seconds']:g}-{segment['end_seconds']:g}s"


def _parse_properties(pairs) -> dict:
    properties = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--property needs key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        properties[key] = value
    return properties


# -- datasource ---------------------------------------------------------------


@main.group()
def datasource():
    """Manage governed media sources."""


@datasource.command("create")
@click.option("--name", required=True)
@click.option("--location", "locations", multiple=True, required=True,
              help="Storage directory; repeatable.")
@click.option("--description", default="")
@click.option("--access-level", type=click.Choice(["UNRESTRICTED", "GATED"]),
              default="UNRESTRICTED")
@click.option("--role", "roles", multiple=True, help="Access role; repeatable.")
@click.option("--data-owner", default=None)
@click.option("--media-uri-field", default="media_uri")
@click.option("--embeddings/--no-embeddings", "embeddings_enabled", default=False)
@pass_state
def datasource_create(state, name, locations, description, access_level, roles,
                      data_owner, media_uri_field, embeddings_enabled):
    spec = {
        "name": name,
        "storage_locations": list(locations),
        "description": description,
        "access_level": access_level,
        "roles": list(roles),
        "media_uri_field": media_uri_field,
        "embeddings_enabled": embeddings_enabled,
    }
    if data_owner:
        spec["data_owner"] = data_owner
    body = state["client"].call("POST", "/datasources", json=spec)
    emit(state, body, [f"{body['id']}  media_count={body['media_count']}"])


@datasource.command("list")
@click.option("--offset", default=0)
@click.option("--limit", default=50)
@pass_state
def datasource_list(state, offset, limit):
    body = state["client"].call(
        "GET", "/datasources", params={"offset": offset, "limit": limit}
    )
    lines = [
        f"{d['id']}  {d['name']}  {d['access_level']}  media={d['media_count']}"
        for d in body["items"]
    ] or ["(no datasources)"]
    emit(state, body, lines)


@datasource.command("show")
@click.argument("datasource_id")
@pass_state
def datasource_show(state, datasource_id):
    body = state["client"].call("GET", f"/datasources/{datasource_id}")
    emit(state, body, [
        f"id: {body['id']}",
        f"name: {body['name']}",
        f"access: {body['access_level']} roles={','.join(body['roles']) or '-'}",
        f"locations: {', '.join(body['storage_locations'])}",
        f"media_count: {body['media_count']}",
        f"embeddings_enabled: {body['embeddings_enabled']}",
    ])


@datasource.command("crawl")
@click.argument("datasource_id")
@click.option("--wait", is_flag=True, help="Block until the crawl finishes.")
@click.option("--timeout", default=300.0)
@pass_state
def datasource_crawl(state, datasource_id, wait, timeout):
    body = state["client"].call("POST", f"/datasources/{datasource_id}/crawl")
    if wait:
        body = _wait_for(state["client"], body["operation_id"], timeout)
        emit(state, body, [f"{body['operation_id']}  {body['status']}"])
        if body["status"] != "SUCCEEDED":
            raise click.ClickException(f"crawl failed: {body.get('error')}")
        return
    emit(state, body, [f"operation: {body['operation_id']}"])


@datasource.command("view")
@click.argument("datasource_id")
@click.option("--query", default=None, help="Filter expression.")
@click.option("--offset", default=0)
@click.option("--limit", default=50)
@pass_state
def datasource_view(state, datasource_id, query, offset, limit):
    params = {"offset": offset, "limit": limit}
    if query:
        params["query"] = query
    body = state["client"].call(
        "GET", f"/datasources/{datasource_id}/view", params=params
    )
    lines = [f"{len(body['items'])} of {body['total']} rows"]
    for row in body["items"]:
        extras = {
            k: v
            for k, v in row.items()
            if k not in ("uri", "generation_id", "content_hash", "size_bytes",
                         "media_type", body["media_uri_field"])
        }
        lines.append(
            f"g{row['generation_id']}  {row['media_type']:<5}  {row['uri']}"
            + (f"  {json.dumps(extras, sort_keys=True)}" if extras else "")
        )
    emit(state, body, lines)


# -- dataset -------------------------------------------------------------------


@main.group()
def dataset():
    """Create and evolve versioned datasets."""


def _emit_dataset(state, body):
    version = body["versions"][-1]
    emit(state, body, [
        f"{body['id']}  {version['label']}  media={len(version['media_refs'])}"
    ])


@dataset.command("create-from-file")
@click.option("--manifest", required=True, type=click.Path())
@click.option("--format", "fmt", required=True,
              type=click.Choice(["JSONL", "COCO"], case_sensitive=False))
@click.option("--name", default=None)
@pass_state
def dataset_from_file(state, manifest, fmt, name):
    body = state["client"].call("POST", "/datasets", json={
        "mode": "file-import",
        "manifest_path": str(Path(manifest).absolute()),
        "format": fmt.upper(),
        "name": name,
    })
    _emit_dataset(state, body)


@dataset.command("create-from-query")
@click.option("--datasource", "datasource_id", required=True)
@click.option("--query", required=True)
@click.option("--name", default=None)
@pass_state
def dataset_from_query(state, datasource_id, query, name):
    body = state["client"].call("POST", "/datasets", json={
        "mode": "query",
        "datasource_id": datasource_id,
        "query": query,
        "name": name,
    })
    _emit_dataset(state, body)


@dataset.command("create-from-search")
@click.option("--scope", required=True, help="ds:<id> or dataset:<id>:v<n>.")
@click.option("--query", required=True)
@click.option("-k", "k", default=10)
@click.option("--mode", type=click.Choice(["EXACT", "APPROX"]), default="EXACT")
@click.option("--select", "select", default="all",
              help="Comma-separated hit ranks to keep, or 'all'.")
@click.option("--name", default=None)
@pass_state
def dataset_from_search(state, scope, query, k, mode, select, name):
    """Search, pick hits by rank, and mint a dataset from the picks."""
    found = state["client"].call("POST", "/search", json={
        "scope": scope, "query": query, "k": k, "mode": mode,
    })
    hits = found["hits"]
    if select != "all":
        try:
            wanted = {int(rank) for rank in select.split(",")}
        except ValueError:
            raise click.UsageError("--select takes ranks like 1,3,4 or 'all'")
        hits = [h for h in hits if h["rank"] in wanted]
    if not hits:
        raise click.ClickException("selection is empty; nothing to create")
    body = state["client"].call("POST", "/datasets", json={
        "mode": "search-selection",
        "scope": scope,
        "selections": [
            {"content_hash": h["content_hash"], "segment": h["segment"]} for h in hits
        ],
        "query_text": query,
        "name": name,
    })
    _emit_dataset(state, body)


@dataset.command("list")
@click.option("--offset", default=0)
@click.option("--limit", default=50)
@pass_state
def dataset_list(state, offset, limit):
    body = state["client"].call(
        "GET", "/datasets", params={"offset": offset, "limit": limit}
    )
    lines = [
        f"{d['id']}  {d['name']}  {d['visibility']}  versions={len(d['versions'])}"
        for d in body["items"]
    ] or ["(no datasets)"]
    emit(state, body, lines)


@dataset.command("show")
@click.argument("dataset_id")
@pass_state
def dataset_show(state, dataset_id):
    body = state["client"].call("GET", f"/datasets/{dataset_id}")
    lines = [
        f"id: {body['id']}",
        f"name: {body['name']}",
        f"visibility: {body['visibility']}",
        f"annotations: {body['has_annotations']}",
    ]
    for version in body["versions"]:
        prov = version["provenance"]["type"]
        lines.append(
            f"  {version['label']}  media={len(version['media_refs'])}  {prov}"
        )
    emit(state, body, lines)


@dataset.command("add-version")
@click.argument("dataset_id")
@click.option("--add", "adds", multiple=True, help="Media uri to add; repeatable.")
@click.option("--remove", "removes", multiple=True,
              help="Media uri to remove; repeatable.")
@pass_state
def dataset_add_version(state, dataset_id, adds, removes):
    changeset = {}
    if adds:
        changeset["add"] = [{"uri": uri} for uri in adds]
    if removes:
        changeset["remove"] = [{"uri": uri} for uri in removes]
    body = state["client"].call(
        "POST", f"/datasets/{dataset_id}/versions", json=changeset
    )
    emit(state, body, [
        f"{body['label']}  parent={body['parent']}  media={len(body['media_refs'])}"
    ])


@dataset.command("lineage")
@click.argument("dataset_id")
@pass_state
def dataset_lineage(state, dataset_id):
    body = state["client"].call("GET", f"/datasets/{dataset_id}/lineage")
    lines = [f"dataset: {body['dataset_id']}  {body['name']}"]
    if body.get("datasource"):
        lines.append(f"from datasource: {body['datasource']['datasource_id']}")
    for version in body["versions"]:
        prov = version["provenance"]
        detail = (
            prov.get("query_used") or prov.get("query_text")
            or prov.get("source_name") or ""
        )
        lines.append(
            f"  {version['label']} <- {version['parent'] or 'root'}"
            f"  media={version['media_count']}  {prov['type']}"
            + (f" ({detail})" if detail else "")
        )
    for annotation in body["annotations"]:
        lines.append(
            f"  annotation {annotation['id']}  {annotation['type']}"
            f"  v{annotation['version']}  {annotation['name']}"
        )
    emit(state, body, lines)


# -- annotation -----------------------------------------------------------------


@main.group()
def annotation():
    """Attach and export annotation sources."""


@annotation.command("attach")
@click.option("--dataset", "dataset_id", required=True)
@click.option("--version", default=1, type=int)
@click.option("--type", "ann_type", required=True,
              type=click.Choice(["COCO", "YOLO", "JSONL", "QUERY"]))
@click.option("--name", required=True)
@click.option("--property", "properties", multiple=True,
              help="key=value source property; repeatable.")
@click.option("--default", "make_default", is_flag=True)
@pass_state
def annotation_attach(state, dataset_id, version, ann_type, name, properties,
                      make_default):
    body = state["client"].call(
        "POST",
        f"/datasets/{dataset_id}/versions/{version}/annotations",
        json={
            "type": ann_type,
            "name": name,
            "properties": _parse_properties(properties),
            "make_default": make_default,
        },
    )
    emit(state, body, [f"{body['id']}  {body['type']}  default={body['is_default']}"])


@annotation.command("list")
@click.option("--dataset", "dataset_id", required=True)
@click.option("--version", default=1, type=int)
@pass_state
def annotation_list(state, dataset_id, version):
    body = state["client"].call(
        "GET", f"/datasets/{dataset_id}/versions/{version}/annotations"
    )
    lines = [
        f"{a['id']}  {a['type']}  default={a['is_default']}  {a['name']}"
        for a in body["items"]
    ] or ["(no annotations)"]
    emit(state, body, lines)


@annotation.command("export")
@click.option("--dataset", "dataset_id", required=True)
@click.option("--version", default=1, type=int)
@click.option("--format", "fmt", required=True, type=click.Choice(["COCO", "YOLO"]))
@click.option("--annotation", "annotation_id", default=None,
              help="Specific annotation id; defaults to the dataset's default.")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Write exported files here instead of printing.")
@pass_state
def annotation_export(state, dataset_id, version, fmt, annotation_id, out_dir):
    client = state["client"]
    if annotation_id is None:
        listing = client.call(
            "GET", f"/datasets/{dataset_id}/versions/{version}/annotations"
        )
        exportable = [a for a in listing["items"] if a["type"] in ("COCO", "JSONL")]
        if not exportable:
            raise click.ClickException("NO_ANNOTATIONS: nothing exportable attached")
        default = [a for a in exportable if a["is_default"]]
        annotation_id = (default or exportable)[-1]["id"]
    body = client.call(
        "GET",
        f"/datasets/{dataset_id}/versions/{version}/annotations/{annotation_id}/export",
        params={"format": fmt},
    )
    if out_dir:
        target = Path(out_dir)
        target.mkdir(parents=True, exist_ok=True)
        for filename, content in body["files"].items():
            path = target / filename
            if isinstance(content, str):
                path.write_text(content, encoding="utf-8")
            else:
                path.write_text(json.dumps(content, indent=2), encoding="utf-8")
        click.echo(f"wrote {len(body['files'])} file(s) to {target}")
        return
    emit(state, body)


# -- search and operations ----------------------------------------------------------


@main.command("search")
@click.option("--scope", required=True, help="ds:<id> or dataset:<id>:v<n>.")
@click.option("--query", required=True)
@click.option("-k", "k", default=10)
@click.option("--mode", type=click.Choice(["EXACT", "APPROX"]), default="EXACT")
@pass_state
def search_cmd(state, scope, query, k, mode):
    body = state["client"].call("POST", "/search", json={
        "scope": scope, "query": query, "k": k, "mode": mode,
    })
    lines = [
        f"{h['rank']:>3}  {h['score']:.6f}  {_fmt_segment(h['segment'])}  {h['uri']}"
        for h in body["hits"]
    ] or ["(no hits)"]
    emit(state, body, lines)


@main.group()
def op():
    """Inspect long-running operations."""


def _wait_for(client: Client, operation_id: str, timeout: float) -> dict:
    deadline = time.monotonic() + timeout
    while True:
        body = client.call("GET", f"/operations/{operation_id}")
        if body["status"] in ("SUCCEEDED", "FAILED"):
            return body
        if time.monotonic() > deadline:
            raise click.ClickException(
                f"timed out after {timeout:g}s; operation still {body['status']}"
            )
        time.sleep(1.0)


def _op_lines(body) -> list[str]:
    return [
        f"{body['operation_id']}  {body['kind']}  {body['status']}"
        f"  done={body['items_done']}/{body['items_total']}"
        + (f"  error={body['error']}" if body.get("error") else "")
    ]


@op.command("show")
@click.argument("operation_id")
@pass_state
def op_show(state, operation_id):
    body = state["client"].call("GET", f"/operations/{operation_id}")
    emit(state, body, _op_lines(body))


@op.command("wait")
@click.argument("operation_id")
@click.option("--timeout", default=300.0)
@pass_state
def op_wait(state, operation_id, timeout):
    body = _wait_for(state["client"], operation_id, timeout)
    emit(state, body, _op_lines(body))
    if body["status"] == "FAILED":
        raise click.ClickException(f"operation failed: {body.get('error')}")


# -- server ---------------------------------------------------------------------


@main.command("serve")
@click.option("--root", default=None, help="Data directory (default from config).")
@click.option("--tokens-file", default=None)
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@click.option("--config", "config_path", default=None,
              help="INI config; env METAPIX_CONFIG also works.")
def serve_cmd(root, tokens_file, host, port, config_path):
    """Host the HTTP API over a local data directory."""
    from metapix.api import serve
    from metapix.config import Config
    from metapix.platform import Platform

    config = Config.load(config_path)
    root = root or config.get_str("store.root")
    tokens_file = tokens_file or config.get_str("auth.tokens_file")
    if not tokens_file:
        raise click.UsageError("--tokens-file (or auth.tokens_file in config) required")
    platform = Platform(root, config=config)
    try:
        serve(
            platform,
            tokens_file,
            host or config.get_str("server.host"),
            port or config.get_int("server.port"),
        )
    finally:
        platform.close()


if __name__ == "__main__":
    main()
