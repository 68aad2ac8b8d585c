"""CLI behaviour against a live HTTP server.

A real uvicorn instance runs in a background thread for the whole
module so every command exercises the full wire path: argument
parsing, request construction, token header, response rendering.
"""

from __future__ import annotations

import json
import socket
import threading
import time
from types import SimpleNamespace

import pytest
import uvicorn
from click.testing import CliRunner

from metapix.api import create_app
from metapix.cli import main, resolve_connection
from metapix.platform import Platform

TOKEN = "tok-admin"


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def rig(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    tokens = root / "tokens.txt"
    tokens.write_text(
        f"{TOKEN} maria@team cv-team,labeling\n"
        "tok-plain guest@team\n"
    )
    platform = Platform(root / "data")
    port = _free_port()
    server = uvicorn.Server(
        uvicorn.Config(
            create_app(platform, tokens), host="127.0.0.1", port=port,
            log_level="error",
        )
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 15
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("api server did not come up")
        time.sleep(0.02)
    yield SimpleNamespace(
        url=f"http://127.0.0.1:{port}", platform=platform, root=root
    )
    server.should_exit = True
    thread.join(timeout=10)
    platform.close()


def cli(rig, *args, expect=0, token=TOKEN):
    argv = ["--endpoint", rig.url]
    if token is not None:
        argv += ["--token", token]
    result = CliRunner().invoke(main, argv + list(args))
    combined = result.output + result.stderr
    assert result.exit_code == expect, f"exit {result.exit_code}: {combined}"
    return combined


def cli_json(rig, *args, **kwargs):
    return json.loads(cli(rig, "--json", *args, **kwargs))


def seed(directory, files):
    directory.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        data = content.encode() if isinstance(content, str) else content
        (directory / name).write_bytes(data)
    return directory


def make_source(rig, tmp_path, name, files, *extra):
    location = seed(tmp_path / name, files)
    body = cli_json(
        rig, "datasource", "create", "--name", name,
        "--location", str(location), *extra,
    )
    return body, location


def import_manifest(rig, tmp_path, name, uris):
    location = seed(
        tmp_path / f"{name}-media", {u: f"bytes-{u}" for u in uris}
    )
    manifest = tmp_path / f"{name}.jsonl"
    manifest.write_text(
        "".join(json.dumps({"uri": str(location / u)}) + "\n" for u in uris)
    )
    return cli_json(
        rig, "dataset", "create-from-file",
        "--manifest", str(manifest), "--format", "JSONL", "--name", name,
    ), location


# -- endpoint coverage -------------------------------------------------------

API_ENDPOINTS = [
    ("POST", "/datasources"),
    ("GET", "/datasources"),
    ("GET", "/datasources/{id}"),
    ("POST", "/datasources/{id}/crawl"),
    ("GET", "/datasources/{id}/view"),
    ("POST", "/datasets"),
    ("GET", "/datasets"),
    ("GET", "/datasets/{id}"),
    ("POST", "/datasets/{id}/versions"),
    ("GET", "/datasets/{id}/lineage"),
    ("POST", "/search"),
    ("POST", "/datasets/{id}/versions/{v}/annotations"),
    ("GET", "/datasets/{id}/versions/{v}/annotations"),
    ("GET", "/datasets/{id}/versions/{v}/annotations/{aid}/export"),
    ("GET", "/operations/{id}"),
]

# command path -> endpoints it calls
COMMAND_CALLS = {
    ("datasource", "create"): [("POST", "/datasources")],
    ("datasource", "list"): [("GET", "/datasources")],
    ("datasource", "show"): [("GET", "/datasources/{id}")],
    ("datasource", "crawl"): [("POST", "/datasources/{id}/crawl"),
                              ("GET", "/operations/{id}")],
    ("datasource", "view"): [("GET", "/datasources/{id}/view")],
    ("dataset", "create-from-file"): [("POST", "/datasets")],
    ("dataset", "create-from-query"): [("POST", "/datasets")],
    ("dataset", "create-from-search"): [("POST", "/search"),
                                        ("POST", "/datasets")],
    ("dataset", "list"): [("GET", "/datasets")],
    ("dataset", "show"): [("GET", "/datasets/{id}")],
    ("dataset", "add-version"): [("POST", "/datasets/{id}/versions")],
    ("dataset", "lineage"): [("GET", "/datasets/{id}/lineage")],
    ("annotation", "attach"): [
        ("POST", "/datasets/{id}/versions/{v}/annotations")],
    ("annotation", "list"): [
        ("GET", "/datasets/{id}/versions/{v}/annotations")],
    ("annotation", "export"): [
        ("GET", "/datasets/{id}/versions/{v}/annotations"),
        ("GET", "/datasets/{id}/versions/{v}/annotations/{aid}/export")],
    ("search",): [("POST", "/search")],
    ("op", "show"): [("GET", "/operations/{id}")],
    ("op", "wait"): [("GET", "/operations/{id}")],
}


def test_every_endpoint_reachable_from_some_command():
    reachable = {endpoint for calls in COMMAND_CALLS.values() for endpoint in calls}
    missing = [endpoint for endpoint in API_ENDPOINTS if endpoint not in reachable]
    assert missing == []


def test_coverage_table_names_real_commands():
    for path in COMMAND_CALLS:
        node = main
        for part in path:
            assert part in node.commands, f"no such command: {' '.join(path)}"
            node = node.commands[part]


# -- connection resolution -----------------------------------------------------


def test_flags_beat_env_beat_file(monkeypatch, tmp_path):
    monkeypatch.setenv("HOME", str(tmp_path))
    (tmp_path / ".metapix").write_text(
        "# saved by setup\nendpoint = http://file:1\ntoken = file-tok\n"
    )
    assert resolve_connection(None, None) == ("http://file:1", "file-tok")

    monkeypatch.setenv("METAPIX_ENDPOINT", "http://env:2")
    monkeypatch.setenv("METAPIX_TOKEN", "env-tok")
    assert resolve_connection(None, None) == ("http://env:2", "env-tok")
    assert resolve_connection("http://flag:3/", "flag-tok") == (
        "http://flag:3", "flag-tok"
    )


def test_defaults_without_any_config(monkeypatch, tmp_path):
    monkeypatch.setenv("HOME", str(tmp_path))
    monkeypatch.delenv("METAPIX_ENDPOINT", raising=False)
    monkeypatch.delenv("METAPIX_TOKEN", raising=False)
    assert resolve_connection(None, None) == ("http://127.0.0.1:8047", "")


# -- exit codes ----------------------------------------------------------------


def test_unknown_subcommand_exits_2(rig):
    result = CliRunner().invoke(main, ["--endpoint", rig.url, "frobnicate"])
    assert result.exit_code == 2
    assert "Usage" in result.output + result.stderr


def test_missing_required_option_exits_2(rig):
    result = CliRunner().invoke(
        main, ["--endpoint", rig.url, "datasource", "create"]
    )
    assert result.exit_code == 2


def test_api_error_exits_1_with_code(rig):
    output = cli(rig, "dataset", "show", "no-such-id", expect=1)
    assert "UNKNOWN_DATASET" in output


def test_missing_token_surfaces_unauthenticated(rig):
    output = cli(rig, "datasource", "list", token=None, expect=1)
    assert "UNAUTHENTICATED" in output


def test_unreachable_endpoint_exits_1():
    result = CliRunner().invoke(
        main,
        ["--endpoint", "http://127.0.0.1:9", "--token", "x",
         "datasource", "list"],
    )
    assert result.exit_code == 1
    assert "cannot reach" in result.output + result.stderr


# -- datasource commands ---------------------------------------------------------


def test_datasource_lifecycle(rig, tmp_path):
    body, location = make_source(
        rig, tmp_path, "lot-a", {"a.jpg": b"aa", "b.jpg": b"bb"}
    )
    source_id = body["id"]
    assert body["media_count"] == 2

    listing = cli(rig, "datasource", "list")
    assert source_id in listing and "lot-a" in listing

    shown = cli(rig, "datasource", "show", source_id)
    assert f"id: {source_id}" in shown
    assert "media_count: 2" in shown

    (location / "c.jpg").write_bytes(b"cc")
    waited = cli(rig, "datasource", "crawl", source_id, "--wait")
    assert "SUCCEEDED" in waited

    view = cli_json(rig, "datasource", "view", source_id)
    assert view["total"] == 3
    assert {row["uri"] for row in view["items"]} == {
        str(location / name) for name in ("a.jpg", "b.jpg", "c.jpg")
    }


def test_datasource_crawl_prints_pollable_operation(rig, tmp_path):
    body, _ = make_source(rig, tmp_path, "lot-poll", {"x.jpg": b"xx"})
    started = cli_json(rig, "datasource", "crawl", body["id"])
    op_id = started["operation_id"]

    waited = cli(rig, "op", "wait", op_id, "--timeout", "60")
    assert "SUCCEEDED" in waited
    shown = cli_json(rig, "op", "show", op_id)
    assert shown["kind"] == "CRAWL"
    assert shown["status"] == "SUCCEEDED"


def test_view_query_filters_rows(rig, tmp_path):
    body, location = make_source(
        rig, tmp_path, "lot-attrs",
        {"s1.jpg": b"s1", "s2.jpg": b"s2", "t1.jpg": b"t1"},
    )
    attrs = rig.root / "lot-attrs.jsonl"
    rows = [
        {"media_uri": str(location / "s1.jpg"), "kind": "suv"},
        {"media_uri": str(location / "s2.jpg"), "kind": "suv"},
        {"media_uri": str(location / "t1.jpg"), "kind": "truck"},
    ]
    attrs.write_text("".join(json.dumps(r) + "\n" for r in rows))
    rig.platform.crawler.load_attributes(body["id"], attrs)
    rig.platform.crawler.build_view(body["id"])

    view = cli_json(
        rig, "datasource", "view", body["id"], "--query", "kind = 'suv'"
    )
    assert view["total"] == 2
    assert all(row["kind"] == "suv" for row in view["items"])

    human = cli(
        rig, "datasource", "view", body["id"], "--query", "kind = 'truck'"
    )
    assert "t1.jpg" in human and "s1.jpg" not in human


# -- dataset commands ------------------------------------------------------------


def test_dataset_from_file_and_versioning(rig, tmp_path):
    body, location = import_manifest(
        rig, tmp_path, "curated", ["a.jpg", "b.jpg"]
    )
    dataset_id = body["id"]
    assert len(body["versions"][0]["media_refs"]) == 2

    extra = seed(tmp_path / "curated-extra", {"c.jpg": b"cc-new"})
    added = cli(
        rig, "dataset", "add-version", dataset_id,
        "--add", str(extra / "c.jpg"),
    )
    assert "v2" in added and "media=3" in added

    removed = cli_json(
        rig, "dataset", "add-version", dataset_id,
        "--remove", str(location / "a.jpg"),
    )
    assert removed["label"] == "v3"
    assert len(removed["media_refs"]) == 2

    shown = cli(rig, "dataset", "show", dataset_id)
    for label in ("v1", "v2", "v3"):
        assert label in shown

    listing = cli(rig, "dataset", "list")
    assert dataset_id in listing

    lineage = cli(rig, "dataset", "lineage", dataset_id)
    assert "v3 <- v2" in lineage
    assert "FILE_IMPORT" in lineage


def test_empty_changeset_rejected(rig, tmp_path):
    body, _ = import_manifest(rig, tmp_path, "nochange", ["a.jpg"])
    output = cli(rig, "dataset", "add-version", body["id"], expect=1)
    assert "EMPTY_CHANGESET" in output


def test_dataset_from_query_prints_id_and_count(rig, tmp_path):
    body, location = make_source(
        rig, tmp_path, "fleet",
        {f"v{i}.jpg": b"fleet-%d" % i for i in range(4)},
    )
    attrs = rig.root / "fleet.jsonl"
    kinds = ["SUV", "SUV", "SUV", "sedan"]
    attrs.write_text("".join(
        json.dumps({"media_uri": str(location / f"v{i}.jpg"),
                    "vehicle_type": kinds[i]}) + "\n"
        for i in range(4)
    ))
    rig.platform.crawler.load_attributes(body["id"], attrs)
    rig.platform.crawler.build_view(body["id"])

    output = cli(
        rig, "dataset", "create-from-query",
        "--datasource", body["id"], "--query", "vehicle_type = 'SUV'",
    )
    first = output.strip().splitlines()[0].split()
    assert first[1] == "v1"
    assert first[2] == "media=3"
    dataset = cli_json(rig, "dataset", "show", first[0])
    assert dataset["id"] == first[0]
    assert "vehicle_type = 'SUV'" in cli(rig, "dataset", "lineage", first[0])


# -- search and selection ----------------------------------------------------------


@pytest.fixture(scope="module")
def captioned(rig, tmp_path_factory):
    location = tmp_path_factory.mktemp("captioned")
    for name, caption in [
        ("red.jpg", "red truck on the road"),
        ("blue.jpg", "blue sedan parked"),
        ("green.jpg", "green field at dusk"),
    ]:
        (location / name).write_bytes(f"pix-{name}".encode())
        (location / f"{name}.txt").write_text(caption)
    body = cli_json(
        rig, "datasource", "create", "--name", "captioned",
        "--location", str(location), "--embeddings",
    )
    rig.platform.settle()
    return body


def test_search_renders_ranked_table(rig, captioned):
    output = cli(
        rig, "search", "--scope", f"ds:{captioned['id']}",
        "--query", "red truck on the road", "-k", "3",
    )
    lines = [line for line in output.strip().splitlines() if line]
    assert len(lines) == 3
    assert lines[0].split()[0] == "1"
    assert "red.jpg" in lines[0]
    ranks = [int(line.split()[0]) for line in lines]
    assert ranks == [1, 2, 3]
    scores = [float(line.split()[1]) for line in lines]
    assert scores == sorted(scores, reverse=True)


def test_search_json_is_machine_readable(rig, captioned):
    body = cli_json(
        rig, "search", "--scope", f"ds:{captioned['id']}",
        "--query", "blue sedan parked", "-k", "2",
    )
    assert body["hits"][0]["rank"] == 1
    assert body["hits"][0]["uri"].endswith("blue.jpg")


def test_dataset_from_search_selection(rig, captioned):
    output = cli(
        rig, "dataset", "create-from-search",
        "--scope", f"ds:{captioned['id']}",
        "--query", "red truck on the road", "-k", "3", "--select", "1",
        "--name", "reds",
    )
    dataset_id = output.split()[0]
    body = cli_json(rig, "dataset", "show", dataset_id)
    refs = body["versions"][0]["media_refs"]
    assert len(refs) == 1
    assert refs[0]["uri"].endswith("red.jpg")
    assert "SEARCH_SELECTION" in cli(rig, "dataset", "lineage", dataset_id)


def test_select_with_bad_ranks_is_usage_error(rig, captioned):
    result = CliRunner().invoke(main, [
        "--endpoint", rig.url, "--token", TOKEN,
        "dataset", "create-from-search", "--scope", f"ds:{captioned['id']}",
        "--query", "anything", "--select", "one,two",
    ])
    assert result.exit_code == 2


# -- annotations -------------------------------------------------------------------


def test_annotation_attach_list_export(rig, tmp_path):
    body, location = import_manifest(rig, tmp_path, "boxed", ["a.jpg"])
    dataset_id = body["id"]
    labels = tmp_path / "boxed-labels.jsonl"
    labels.write_text(json.dumps({
        "uri": str(location / "a.jpg"),
        "width": 64, "height": 48,
        "boxes": [{"category": "car", "x": 4, "y": 6, "w": 20, "h": 10}],
    }) + "\n")

    attached = cli_json(
        rig, "annotation", "attach", "--dataset", dataset_id,
        "--type", "JSONL", "--name", "boxes",
        "--property", f"manifest_path={labels}", "--default",
    )
    assert attached["is_default"] is True

    listing = cli(rig, "annotation", "list", "--dataset", dataset_id)
    assert attached["id"] in listing and "JSONL" in listing

    out_dir = tmp_path / "exported"
    written = cli(
        rig, "annotation", "export", "--dataset", dataset_id,
        "--format", "COCO", "--out", str(out_dir),
    )
    assert "wrote 1 file(s)" in written
    doc = json.loads((out_dir / "annotations.json").read_text())
    assert doc["annotations"][0]["bbox"] == [4.0, 6.0, 20.0, 10.0]
    assert doc["categories"][0]["name"] == "car"

    inline = cli_json(
        rig, "annotation", "export", "--dataset", dataset_id,
        "--format", "YOLO", "--annotation", attached["id"],
    )
    assert inline["format"] == "YOLO"
    assert any(name.endswith(".txt") for name in inline["files"])


def test_export_without_annotations_fails(rig, tmp_path):
    body, _ = import_manifest(rig, tmp_path, "bare", ["a.jpg"])
    output = cli(
        rig, "annotation", "export", "--dataset", body["id"],
        "--format", "COCO", expect=1,
    )
    assert "NO_ANNOTATIONS" in output


# -- json mode everywhere ------------------------------------------------------------


def test_json_flag_yields_parseable_output_for_reads(rig, tmp_path):
    body, _ = make_source(rig, tmp_path, "lot-json", {"j.jpg": b"jj"})
    for args in (
        ("datasource", "list"),
        ("datasource", "show", body["id"]),
        ("datasource", "view", body["id"]),
        ("dataset", "list"),
    ):
        parsed = cli_json(rig, *args)
        assert isinstance(parsed, dict)


def test_serve_without_tokens_file_is_usage_error(tmp_path, monkeypatch):
    monkeypatch.delenv("METAPIX_CONFIG", raising=False)
    result = CliRunner().invoke(main, ["serve", "--root", str(tmp_path / "d")])
    assert result.exit_code == 2
    assert "tokens" in (result.output + result.stderr).lower()
