"""Crawler object table, attribute views, dataset lifecycle, and access tests."""

from __future__ import annotations

import hashlib
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metapix.annotations import AnnotationService
from metapix.catalog import CatalogService, Principal, check_access
from metapix.crawler import OBJECT_TABLE_OWNER, TOPIC_MEDIA_ADDED, Crawler
from metapix.errors import MetapixError
from metapix.platform import Platform
from metapix.query import parse
from metapix.search import Scope, VectorIndex
from metapix.store import BlobStore, Collection, MetadataStore
from oracles.naive_query import naive_materialize

OWNER = Principal("maria@team")

D = 32


def seed(directory, files):
    """Write {relative name: bytes|str} under directory."""
    directory.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        target = directory / name
        target.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, str):
            data = data.encode("utf-8")
        target.write_bytes(data)


class Stack:
    """Store, blobs, crawler, catalog over one root; bus replaced by a list."""

    def __init__(self, root):
        self.store = MetadataStore(root)
        self.blobs = BlobStore(root)
        self.events = []
        self.crawler = Crawler(self.store, self.blobs, publish=self._publish)
        self.index = VectorIndex(root, dimension=D)
        self.catalog = CatalogService(
            self.store, self.blobs, crawler=self.crawler, index=self.index
        )
        self.annotations = AnnotationService(
            self.store, resolve_version=self.catalog.resolve_version
        )
        self.catalog.set_annotations(self.annotations)

    def _publish(self, topic, payload):
        self.events.append((topic, dict(payload)))
        return f"m-{len(self.events)}"

    def source(self, tmp_path, name="lot", files=None, **overrides):
        """Create a datasource rooted at a fresh directory; returns (record, dir)."""
        location = tmp_path / f"media-{name}"
        seed(location, files or {})
        spec = {
            "name": name,
            "storage_locations": [str(location)],
            "data_owner": OWNER.user_id,
        }
        spec.update(overrides)
        return self.catalog.create_datasource(spec), location


@pytest.fixture
def stack(tmp_path):
    return Stack(tmp_path / "data")


@pytest.fixture
def platform(tmp_path):
    p = Platform(tmp_path / "data")
    yield p
    p.close()


def seed_captioned(location, files, caption="red suv on the highway"):
    """Images plus sidecar captions so the stub embedder has text to hash."""
    seed(location, files)
    for name in files:
        (location / (name + ".txt")).write_text(f"{caption} {name}", encoding="utf-8")


def embedding_ops(store):
    return [
        body
        for _, body in store.list_records(Collection.OPERATIONS)
        if body["kind"] == "EMBEDDING"
    ]


def bus_topics(root):
    path = root / "bus" / "messages.jsonl"
    if not path.exists():
        return []
    return [
        json.loads(line)["topic"]
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


# -- crawler: scanning --------------------------------------------------------


def test_fresh_scan_counts_three_new_files(stack, tmp_path):
    record, location = stack.source(tmp_path)
    seed(location, {"a.jpg": b"aa", "b.png": b"bb", "c.jpg": b"cc"})
    report = stack.crawler.scan_location(record["id"], location)
    assert report["added"] == 3
    assert report["modified"] == 0
    assert report["deleted"] == 0
    rows = stack.crawler.object_rows(record["id"])
    assert [row["generation_id"] for row in rows] == [1, 1, 1]
    assert all(row["media_type"] == "IMAGE" for row in rows)


def test_rescan_unchanged_tree_is_idempotent(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"aa", "b.jpg": b"bb"})
    before = stack.store.journal_length(Collection.OBJECT_TABLE)
    report = stack.crawler.scan_location(record["id"], location)
    assert (report["added"], report["modified"], report["deleted"]) == (0, 0, 0)
    assert stack.store.journal_length(Collection.OBJECT_TABLE) == before


def test_changed_bytes_bump_generation(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"v1", "b.jpg": b"bb"})
    (location / "a.jpg").write_bytes(b"v2")
    report = stack.crawler.scan_location(record["id"], location)
    assert (report["added"], report["modified"], report["deleted"]) == (0, 1, 0)
    by_uri = {row["uri"]: row for row in stack.crawler.object_rows(record["id"])}
    assert by_uri[str(location / "a.jpg")]["generation_id"] == 2
    assert by_uri[str(location / "b.jpg")]["generation_id"] == 1


def test_rewrite_with_same_bytes_is_not_a_modification(stack, tmp_path):
    # mtime moves but the hash does not; generation must not move either
    record, location = stack.source(tmp_path, files={"a.jpg": b"same"})
    (location / "a.jpg").write_bytes(b"same")
    report = stack.crawler.scan_location(record["id"], location)
    assert (report["added"], report["modified"], report["deleted"]) == (0, 0, 0)
    assert stack.crawler.object_rows(record["id"])[0]["generation_id"] == 1


def test_vanished_file_marked_deleted(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"aa", "b.jpg": b"bb"})
    (location / "a.jpg").unlink()
    report = stack.crawler.scan_location(record["id"], location)
    assert report["deleted"] == 1
    live = stack.crawler.object_rows(record["id"])
    assert [row["uri"] for row in live] == [str(location / "b.jpg")]
    everything = stack.crawler.object_rows(record["id"], include_deleted=True)
    gone = next(r for r in everything if r["uri"] == str(location / "a.jpg"))
    assert gone["deleted"] is True


def test_recreated_file_continues_the_generation_sequence(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"first"})
    ds = record["id"]
    (location / "a.jpg").unlink()
    stack.crawler.scan_location(ds, location)
    (location / "a.jpg").write_bytes(b"second")
    report = stack.crawler.scan_location(ds, location)
    assert report["added"] == 1
    row = stack.crawler.object_rows(ds)[0]
    assert row["generation_id"] == 2
    assert row["deleted"] is False


def test_recreated_identical_file_keeps_its_generation(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"stable"})
    (location / "a.jpg").unlink()
    stack.crawler.scan_location(record["id"], location)
    (location / "a.jpg").write_bytes(b"stable")
    stack.crawler.scan_location(record["id"], location)
    row = stack.crawler.object_rows(record["id"])[0]
    # same content hash: no new generation, just undeleted
    assert row["generation_id"] == 1
    assert row["deleted"] is False


def test_generation_journal_is_monotone_per_uri(stack, tmp_path):
    record, location = stack.source(tmp_path)
    ds = record["id"]
    target = location / "a.jpg"
    steps = [b"A", b"B", None, b"B", b"C", None, b"D"]
    for data in steps:
        if data is None:
            target.unlink()
        else:
            target.write_bytes(data)
        stack.crawler.scan_location(ds, location)

    journal = stack.store.root / "collections" / "object_table.jsonl"
    entries = [
        json.loads(line)["body"]
        for line in journal.read_text(encoding="utf-8").splitlines()
        if json.loads(line)["id"] == f"{ds}::{target}"
    ]
    generations = [entry["generation_id"] for entry in entries]
    assert generations == [1, 2, 2, 2, 3, 3, 4]
    hashes = [entry["content_hash"] for entry in entries]
    for prev, cur, g_prev, g_cur in zip(hashes, hashes[1:], generations, generations[1:]):
        assert g_cur >= g_prev
        if g_cur > g_prev:
            assert cur != prev


def test_video_directory_is_one_object(stack, tmp_path):
    manifest = b'{"caption": "merge lane", "timestamp": 0.0}\n'
    record, location = stack.source(tmp_path)
    seed(
        location,
        {
            "clip/manifest.jsonl": manifest,
            "clip/frame0.jpg": b"f0",
            "clip/frame1.jpg": b"f1",
            "still.jpg": b"s",
        },
    )
    report = stack.crawler.scan_location(record["id"], location)
    assert report["added"] == 2
    by_uri = {row["uri"]: row for row in stack.crawler.object_rows(record["id"])}
    clip = by_uri[str(location / "clip")]
    assert clip["media_type"] == "VIDEO"
    assert clip["content_hash"] == hashlib.sha256(manifest).hexdigest()
    assert clip["size_bytes"] == len(manifest)
    assert str(location / "clip" / "frame0.jpg") not in by_uri


def test_non_media_files_ignored(stack, tmp_path):
    record, location = stack.source(
        tmp_path, files={"a.jpg": b"aa", "notes.txt": "x", "meta.csv": "y"}
    )
    assert len(stack.crawler.object_rows(record["id"])) == 1


def test_zero_byte_media_reported_as_partial_scan(stack, tmp_path):
    record, location = stack.source(tmp_path)
    seed(location, {"good1.jpg": b"g1", "good2.jpg": b"g2", "junk.jpg": b""})
    with pytest.raises(MetapixError) as exc:
        stack.crawler.scan_location(record["id"], location)
    assert exc.value.code == "PARTIAL_SCAN"
    assert exc.value.details["unreadable"] == [str(location / "junk.jpg")]
    # the readable files still landed before the error surfaced
    assert exc.value.details["report"]["added"] == 2
    assert len(stack.crawler.object_rows(record["id"])) == 2


def test_dangling_symlink_reported_as_partial_scan(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"ok.jpg": b"ok"})
    (location / "ghost.jpg").symlink_to(location / "never-existed.bin")
    with pytest.raises(MetapixError) as exc:
        stack.crawler.scan_location(record["id"], location)
    assert exc.value.code == "PARTIAL_SCAN"
    assert str(location / "ghost.jpg") in exc.value.details["unreadable"]


def test_scan_of_unregistered_path_rejected(stack, tmp_path):
    record, _ = stack.source(tmp_path)
    elsewhere = tmp_path / "elsewhere"
    elsewhere.mkdir()
    with pytest.raises(ValueError):
        stack.crawler.scan_location(record["id"], elsewhere)


def test_scan_of_vanished_location_unreadable(stack, tmp_path):
    record, location = stack.source(tmp_path)
    location.rmdir()
    with pytest.raises(MetapixError) as exc:
        stack.crawler.scan_location(record["id"], location)
    assert exc.value.code == "UNREADABLE_LOCATION"


def test_scan_all_sums_locations(stack, tmp_path):
    first = tmp_path / "loc1"
    second = tmp_path / "loc2"
    seed(first, {"a.jpg": b"a"})
    seed(second, {"b.jpg": b"b", "c.jpg": b"c"})
    record = stack.catalog.create_datasource(
        {
            "name": "two-roots",
            "storage_locations": [str(first), str(second)],
            "data_owner": OWNER.user_id,
        }
    )
    assert record["media_count"] == 3
    seed(second, {"d.jpg": b"d"})
    report = stack.crawler.scan_all(record["id"])
    assert report["added"] == 1


def test_scan_publishes_media_added_events(stack, tmp_path):
    record, location = stack.source(tmp_path)
    seed(location, {"a.jpg": b"a", "b.jpg": b"b"})
    stack.crawler.scan_location(record["id"], location)
    added = [p for t, p in stack.events if t == TOPIC_MEDIA_ADDED]
    assert {p["uri"] for p in added} == {str(location / "a.jpg"), str(location / "b.jpg")}
    assert all(p["datasource_id"] == record["id"] for p in added)
    (location / "a.jpg").write_bytes(b"a2")
    stack.crawler.scan_location(record["id"], location)
    added = [p for t, p in stack.events if t == TOPIC_MEDIA_ADDED]
    assert len(added) == 3


def test_blob_ownership_follows_live_rows(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"one"})
    ds = record["id"]
    old_hash = hashlib.sha256(b"one").hexdigest()
    assert (OBJECT_TABLE_OWNER, ds) in stack.blobs.owners_of(old_hash)

    (location / "a.jpg").write_bytes(b"two")
    stack.crawler.scan_location(ds, location)
    assert (OBJECT_TABLE_OWNER, ds) not in stack.blobs.owners_of(old_hash)
    new_hash = hashlib.sha256(b"two").hexdigest()
    assert (OBJECT_TABLE_OWNER, ds) in stack.blobs.owners_of(new_hash)

    (location / "a.jpg").unlink()
    stack.crawler.scan_location(ds, location)
    assert (OBJECT_TABLE_OWNER, ds) not in stack.blobs.owners_of(new_hash)


# -- crawler: attributes and the view -----------------------------------------


def attr_jsonl(path, rows):
    path.write_text(
        "".join(json.dumps(row) + "\n" for row in rows), encoding="utf-8"
    )
    return path


def test_load_attributes_jsonl_matches_rows(stack, tmp_path):
    record, location = stack.source(
        tmp_path, files={"a.jpg": b"a", "b.jpg": b"b", "c.jpg": b"c"}
    )
    rows = [
        {"media_uri": str(location / name), "vehicle_type": t}
        for name, t in (("a.jpg", "SUV"), ("b.jpg", "SEDAN"), ("c.jpg", "SUV"))
    ]
    report = stack.crawler.load_attributes(
        record["id"], attr_jsonl(tmp_path / "attrs.jsonl", rows)
    )
    assert report == {"loaded": 3, "unmatched": []}


def test_unmatched_attribute_rows_reported_not_stored(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"a"})
    rows = [
        {"media_uri": str(location / "a.jpg"), "vehicle_type": "SUV"},
        {"media_uri": "fs:/never/crawled.jpg", "vehicle_type": "TRUCK"},
    ]
    report = stack.crawler.load_attributes(
        record["id"], attr_jsonl(tmp_path / "attrs.jsonl", rows)
    )
    assert report["loaded"] == 1
    assert report["unmatched"] == ["fs:/never/crawled.jpg"]
    view = stack.crawler.build_view(record["id"])
    assert all(r["uri"] != "fs:/never/crawled.jpg" for r in view["rows"])


def test_csv_missing_uri_column(stack, tmp_path):
    record, _ = stack.source(tmp_path, files={"a.jpg": b"a"})
    csv_path = tmp_path / "attrs.csv"
    csv_path.write_text("path,vehicle_type\nx,SUV\n", encoding="utf-8")
    with pytest.raises(MetapixError) as exc:
        stack.crawler.load_attributes(record["id"], csv_path)
    assert exc.value.code == "MISSING_URI_COLUMN"


def test_jsonl_row_without_uri_key(stack, tmp_path):
    record, _ = stack.source(tmp_path, files={"a.jpg": b"a"})
    path = tmp_path / "attrs.jsonl"
    path.write_text('{"vehicle_type": "SUV"}\n', encoding="utf-8")
    with pytest.raises(MetapixError) as exc:
        stack.crawler.load_attributes(record["id"], path)
    assert exc.value.code == "MISSING_URI_COLUMN"
    assert exc.value.details["line"] == 1


def test_malformed_jsonl_line_carries_line_number(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"a"})
    path = tmp_path / "attrs.jsonl"
    path.write_text(
        json.dumps({"media_uri": str(location / "a.jpg")}) + "\n{not json\n",
        encoding="utf-8",
    )
    with pytest.raises(MetapixError) as exc:
        stack.crawler.load_attributes(record["id"], path)
    assert exc.value.code == "FORMAT_ERROR"
    assert exc.value.details["line"] == 2


def test_ragged_csv_row_rejected(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"a"})
    path = tmp_path / "attrs.csv"
    path.write_text(
        f"media_uri,vehicle_type,count\n{location / 'a.jpg'},SUV\n", encoding="utf-8"
    )
    with pytest.raises(MetapixError) as exc:
        stack.crawler.load_attributes(record["id"], path)
    assert exc.value.code == "FORMAT_ERROR"
    assert exc.value.details["line"] == 2


def test_csv_scalars_coerced_to_numbers(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"a"})
    path = tmp_path / "attrs.csv"
    path.write_text(
        f"media_uri,vehicle_type,lane_count,score\n{location / 'a.jpg'},SUV,3,2.5\n",
        encoding="utf-8",
    )
    stack.crawler.load_attributes(record["id"], path)
    row = stack.crawler.build_view(record["id"])["rows"][0]
    assert row["vehicle_type"] == "SUV"
    assert row["lane_count"] == 3 and isinstance(row["lane_count"], int)
    assert row["score"] == 2.5 and isinstance(row["score"], float)


def test_view_left_join_keeps_attribute_free_rows(stack, tmp_path):
    record, location = stack.source(
        tmp_path, files={"a.jpg": b"a", "b.jpg": b"b", "c.jpg": b"c"}
    )
    rows = [
        {"media_uri": str(location / "a.jpg"), "vehicle_type": "SUV"},
        {"media_uri": str(location / "b.jpg"), "vehicle_type": "SEDAN"},
    ]
    stack.crawler.load_attributes(record["id"], attr_jsonl(tmp_path / "x.jsonl", rows))
    view = stack.crawler.build_view(record["id"])
    assert len(view["rows"]) == 3
    by_uri = {r["uri"]: r for r in view["rows"]}
    assert by_uri[str(location / "a.jpg")]["vehicle_type"] == "SUV"
    assert "vehicle_type" not in by_uri[str(location / "c.jpg")]
    field = view["media_uri_field"]
    assert all(r[field] == r["uri"] for r in view["rows"])


def test_view_drops_stale_generation_attributes(stack, tmp_path):
    record, location = stack.source(tmp_path, files={"a.jpg": b"v1"})
    attrs = attr_jsonl(
        tmp_path / "x.jsonl",
        [{"media_uri": str(location / "a.jpg"), "vehicle_type": "SUV"}],
    )
    stack.crawler.load_attributes(record["id"], attrs)
    assert stack.crawler.build_view(record["id"])["rows"][0]["vehicle_type"] == "SUV"

    (location / "a.jpg").write_bytes(b"v2")
    stack.crawler.scan_location(record["id"], location)
    row = stack.crawler.build_view(record["id"])["rows"][0]
    assert row["generation_id"] == 2
    assert "vehicle_type" not in row

    stack.crawler.load_attributes(record["id"], attrs)
    row = stack.crawler.build_view(record["id"])["rows"][0]
    assert row["vehicle_type"] == "SUV"


def test_view_row_count_tracks_media_count(stack, tmp_path):
    record, location = stack.source(
        tmp_path, files={"a.jpg": b"a", "b.jpg": b"b"}
    )
    assert stack.catalog.get_datasource(record["id"])["media_count"] == 2
    (location / "a.jpg").unlink()
    stack.crawler.scan_location(record["id"], location)
    view = stack.crawler.build_view(record["id"])
    assert len(view["rows"]) == 1
    assert stack.catalog.get_datasource(record["id"])["media_count"] == 1


def test_view_rows_resolve_to_retrievable_blobs(stack, tmp_path):
    record, location = stack.source(
        tmp_path, files={"a.jpg": b"alpha", "b.jpg": b"beta"}
    )
    for row in stack.crawler.build_view(record["id"])["rows"]:
        from_store = stack.blobs.get_blob(row["content_hash"])
        assert from_store == (location / row["uri"].rsplit("/", 1)[1]).read_bytes()


# -- datasource creation -------------------------------------------------------


def test_gated_source_needs_roles(stack, tmp_path):
    location = tmp_path / "m"
    location.mkdir()
    with pytest.raises(MetapixError) as exc:
        stack.catalog.create_datasource(
            {
                "name": "locked",
                "storage_locations": [str(location)],
                "access_level": "GATED",
                "roles": [],
            }
        )
    assert exc.value.code == "GATED_WITHOUT_ROLES"


def test_duplicate_datasource_name_rejected(stack, tmp_path):
    stack.source(tmp_path, name="lot")
    with pytest.raises(MetapixError) as exc:
        stack.catalog.create_datasource({"name": "lot", "storage_locations": []})
    assert exc.value.code == "DUPLICATE_NAME"


def test_unreadable_location_rejected_at_creation(stack, tmp_path):
    with pytest.raises(MetapixError) as exc:
        stack.catalog.create_datasource(
            {"name": "nowhere", "storage_locations": [str(tmp_path / "missing")]}
        )
    assert exc.value.code == "UNREADABLE_LOCATION"


def test_creation_runs_the_first_crawl(stack, tmp_path):
    record, location = stack.source(
        tmp_path, files={"a.jpg": b"a", "b.jpg": b"b", "c.jpg": b"c"}
    )
    assert record["media_count"] == 3
    assert len(stack.crawler.object_rows(record["id"])) == 3
    assert record["id"].startswith("ds-")
    assert record["access_level"] == "UNRESTRICTED"


# -- datasets from files ---------------------------------------------------------


def media_manifest(tmp_path, location, contents, name="import.jsonl"):
    """JSONL manifest naming one media file per entry; returns its path."""
    seed(location, contents)
    manifest = tmp_path / name
    manifest.write_text(
        "".join(json.dumps({"uri": str(location / name)}) + "\n" for name in contents),
        encoding="utf-8",
    )
    return manifest


def test_import_dedups_identical_bytes(stack, tmp_path):
    manifest = media_manifest(
        tmp_path,
        tmp_path / "m",
        {"a.jpg": b"one", "b.jpg": b"two", "c.jpg": b"dup", "d.jpg": b"dup"},
    )
    dataset = stack.catalog.create_dataset_from_file(OWNER, manifest, "JSONL")
    refs = dataset["versions"][0]["media_refs"]
    assert len(refs) == 4
    assert len({r["content_hash"] for r in refs}) == 3
    assert len(stack.blobs.list_blobs()) == 3
    for ref in refs:
        assert (dataset["id"], "v1") in stack.blobs.owners_of(ref["content_hash"])
    assert dataset["versions"][0]["provenance"]["type"] == "FILE_IMPORT"


def test_coco_import_links_annotation_record(stack, tmp_path):
    root = tmp_path / "coco"
    seed(root, {"img1.png": b"pixels"})
    doc = {
        "images": [{"id": 1, "file_name": "img1.png", "width": 64, "height": 48}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 7, "bbox": [4.0, 4.0, 20.0, 16.0]}
        ],
        "categories": [{"id": 7, "name": "car"}],
    }
    coco_path = root / "boxes.json"
    coco_path.write_text(json.dumps(doc), encoding="utf-8")

    dataset = stack.catalog.create_dataset_from_file(OWNER, coco_path, "COCO")
    assert dataset["has_annotations"] is True
    assert len(dataset["versions"][0]["media_refs"]) == 1
    linked = stack.annotations.list_annotations(dataset["id"], 1)
    assert len(linked) == 1
    assert linked[0]["type"] == "COCO"
    assert linked[0]["is_default"] is True


def test_import_with_missing_media_names_them(stack, tmp_path):
    location = tmp_path / "m"
    seed(location, {"real.jpg": b"r"})
    manifest = tmp_path / "import.jsonl"
    missing = str(location / "ghost.jpg")
    manifest.write_text(
        json.dumps({"uri": str(location / "real.jpg")})
        + "\n"
        + json.dumps({"uri": missing})
        + "\n",
        encoding="utf-8",
    )
    with pytest.raises(MetapixError) as exc:
        stack.catalog.create_dataset_from_file(OWNER, manifest, "JSONL")
    assert exc.value.code == "MEDIA_NOT_FOUND"
    assert exc.value.details["missing"] == [missing]


def test_import_rejects_unknown_format(stack, tmp_path):
    with pytest.raises(MetapixError) as exc:
        stack.catalog.create_dataset_from_file(OWNER, tmp_path / "x.xml", "VOC")
    assert exc.value.code == "UNSUPPORTED_FORMAT"


# -- datasets from queries --------------------------------------------------------


def suv_fixture(stack, tmp_path, **source_overrides):
    """10 crawled images, 4 tagged SUV; returns (datasource, view rows)."""
    files = {f"img{i:02d}.jpg": f"pixels-{i}".encode() for i in range(10)}
    record, location = stack.source(tmp_path, files=files, **source_overrides)
    rows = [
        {
            "media_uri": str(location / f"img{i:02d}.jpg"),
            "vehicle_type": "SUV" if i < 4 else ("SEDAN" if i % 2 else "TRUCK"),
        }
        for i in range(10)
    ]
    stack.crawler.load_attributes(
        record["id"], attr_jsonl(tmp_path / "attrs.jsonl", rows)
    )
    view = stack.crawler.build_view(record["id"])
    return record, view["rows"]


def test_query_dataset_matches_bruteforce_filter(stack, tmp_path):
    record, rows = suv_fixture(stack, tmp_path)
    query = "vehicle_type = 'SUV'"
    dataset = stack.catalog.create_dataset_from_query(OWNER, record["id"], query)
    refs = dataset["versions"][0]["media_refs"]
    expected = naive_materialize(rows, parse(query))
    assert [r["uri"] for r in refs] == [row["uri"] for row in expected]
    assert len(refs) == 4
    prov = dataset["versions"][0]["provenance"]
    assert prov == {
        "type": "QUERY",
        "query_used": query,
        "datasource_id": record["id"],
    }


def test_query_dataset_snapshots_access(stack, tmp_path):
    record, _ = suv_fixture(
        stack, tmp_path, access_level="GATED", roles=["cv-team"]
    )
    dataset = stack.catalog.create_dataset_from_query(
        OWNER, record["id"], "vehicle_type != 'SUV'"
    )
    assert dataset["visibility"] == "RESTRICTED"
    assert dataset["datasource"]["roles"] == ["cv-team"]
    assert dataset["datasource"]["datasource_id"] == record["id"]
    assert bool(check_access(Principal("peer", ("cv-team",)), dataset))
    assert not check_access(Principal("peer", ("mfg",)), dataset)


def test_query_requires_source_access(stack, tmp_path):
    record, _ = suv_fixture(stack, tmp_path, access_level="GATED", roles=["cv-team"])
    outsider = Principal("visitor", ("mfg",))
    with pytest.raises(MetapixError) as exc:
        stack.catalog.create_dataset_from_query(
            outsider, record["id"], "vehicle_type = 'SUV'"
        )
    assert exc.value.code == "ACCESS_DENIED"


def test_query_parse_error_propagates(stack, tmp_path):
    record, _ = stack.source(tmp_path, files={"a.jpg": b"a"})
    with pytest.raises(MetapixError) as exc:
        stack.catalog.create_dataset_from_query(OWNER, record["id"], "vehicle_type =")
    assert exc.value.code == "QUERY_PARSE_ERROR"


# -- datasets from search selections ------------------------------------------------


def unit_vector(position):
    v = [0.0] * D
    v[position % D] = 1.0
    return v


def indexed_source(stack, tmp_path, records, payloads=()):
    record, _ = stack.source(tmp_path)
    for data in payloads:
        stack.blobs.put_blob(data)
    scope = Scope("datasource", record["id"])
    stack.index.index_add(scope, records)
    return record, scope


def image_record(stack, i):
    data = b"img-%d" % i
    stack.blobs.put_blob(data)
    return {
        "content_hash": hashlib.sha256(data).hexdigest(),
        "uri": f"fs:/pool/{i}.jpg",
        "segment": None,
        "model_id": "stub-fnv1a",
        "vector": unit_vector(i),
    }


def test_search_selection_keeps_exactly_the_chosen_hits(stack, tmp_path):
    records = [image_record(stack, i) for i in range(5)]
    source, scope = indexed_source(stack, tmp_path, records)
    chosen = [
        {"content_hash": records[1]["content_hash"], "segment": None},
        {"content_hash": records[3]["content_hash"], "segment": None},
    ]
    dataset = stack.catalog.create_dataset_from_search(
        OWNER, str(scope), chosen, query_text="red suv"
    )
    refs = dataset["versions"][0]["media_refs"]
    assert {r["content_hash"] for r in refs} == {
        records[1]["content_hash"],
        records[3]["content_hash"],
    }
    prov = dataset["versions"][0]["provenance"]
    assert prov["type"] == "SEARCH_SELECTION"
    assert prov["query_text"] == "red suv"
    copied = stack.index.records_for(Scope("dataset", dataset["id"], version=1))
    assert len(copied) == 2


def test_search_selection_by_record_id(stack, tmp_path):
    records = [image_record(stack, i) for i in range(3)]
    source, scope = indexed_source(stack, tmp_path, records)
    stored = stack.index.records_for(scope)
    dataset = stack.catalog.create_dataset_from_search(
        OWNER, str(scope), [stored[0]["id"]]
    )
    assert len(dataset["versions"][0]["media_refs"]) == 1


def test_unknown_segment_rejected(stack, tmp_path):
    source, scope = indexed_source(stack, tmp_path, [image_record(stack, 0)])
    with pytest.raises(MetapixError) as exc:
        stack.catalog.create_dataset_from_search(
            OWNER, str(scope), [{"content_hash": "feed" * 16, "segment": None}]
        )
    assert exc.value.code == "UNKNOWN_SEGMENT"


def test_selection_spanning_two_videos_keeps_pairs_distinct(stack, tmp_path):
    h1 = hashlib.sha256(b"video-1").hexdigest()
    h2 = hashlib.sha256(b"video-2").hexdigest()
    seg = lambda s, e: {"start_seconds": float(s), "end_seconds": float(e)}
    records = [
        {"content_hash": h1, "uri": "fs:/v1", "segment": seg(0, 5),
         "model_id": "stub-fnv1a", "vector": unit_vector(0)},
        {"content_hash": h1, "uri": "fs:/v1", "segment": seg(5, 10),
         "model_id": "stub-fnv1a", "vector": unit_vector(1)},
        {"content_hash": h2, "uri": "fs:/v2", "segment": seg(0, 5),
         "model_id": "stub-fnv1a", "vector": unit_vector(2)},
    ]
    source, scope = indexed_source(
        stack, tmp_path, records, payloads=(b"video-1", b"video-2")
    )
    chosen = [
        {"content_hash": h1, "segment": seg(0, 5)},
        {"content_hash": h1, "segment": seg(5, 10)},
        {"content_hash": h2, "segment": seg(0, 5)},
    ]
    dataset = stack.catalog.create_dataset_from_search(OWNER, str(scope), chosen)
    refs = dataset["versions"][0]["media_refs"]
    pairs = {(r["content_hash"], json.dumps(r["segment"], sort_keys=True)) for r in refs}
    assert len(refs) == 3 and len(pairs) == 3
    assert all(r["media_type"] == "VIDEO" for r in refs)


# -- versioning and lineage ----------------------------------------------------------


def imported_dataset(stack, tmp_path, names=("a.jpg", "b.jpg")):
    location = tmp_path / "pool"
    manifest = media_manifest(
        tmp_path, location, {name: f"bytes-{name}".encode() for name in names}
    )
    return stack.catalog.create_dataset_from_file(OWNER, manifest, "JSONL"), location


def test_new_version_chains_to_parent(stack, tmp_path):
    dataset, location = imported_dataset(stack, tmp_path)
    before = json.dumps(dataset["versions"][0], sort_keys=True)

    seed(location, {"c.jpg": b"bytes-c.jpg"})
    v2 = stack.catalog.add_version(
        OWNER,
        dataset["id"],
        {
            "add": [{"uri": str(location / "c.jpg")}],
            "provenance": {"type": "DERIVED", "extractor_kind": "mask-pii"},
        },
    )
    assert v2["label"] == "v2"
    assert v2["parent"] == "v1"
    assert len(v2["media_refs"]) == 3

    fresh = stack.catalog.get_dataset(dataset["id"])
    assert [v["label"] for v in fresh["versions"]] == ["v1", "v2"]
    # prior version bytes must not move
    assert json.dumps(fresh["versions"][0], sort_keys=True) == before

    added_hash = hashlib.sha256(b"bytes-c.jpg").hexdigest()
    assert (dataset["id"], "v2") in stack.blobs.owners_of(added_hash)
    kept_hash = hashlib.sha256(b"bytes-a.jpg").hexdigest()
    owners = stack.blobs.owners_of(kept_hash)
    assert (dataset["id"], "v1") in owners and (dataset["id"], "v2") in owners


def test_version_removal_leaves_parent_untouched(stack, tmp_path):
    dataset, location = imported_dataset(stack, tmp_path)
    gone = str(location / "a.jpg")
    v2 = stack.catalog.add_version(
        OWNER, dataset["id"], {"remove": [{"uri": gone}]}
    )
    assert [r["uri"] for r in v2["media_refs"]] == [str(location / "b.jpg")]
    fresh = stack.catalog.get_dataset(dataset["id"])
    assert len(fresh["versions"][0]["media_refs"]) == 2


def test_empty_changeset_rejected(stack, tmp_path):
    dataset, _ = imported_dataset(stack, tmp_path)
    with pytest.raises(MetapixError) as exc:
        stack.catalog.add_version(OWNER, dataset["id"], {})
    assert exc.value.code == "EMPTY_CHANGESET"


def test_removing_absent_media_rejected(stack, tmp_path):
    dataset, _ = imported_dataset(stack, tmp_path)
    with pytest.raises(MetapixError) as exc:
        stack.catalog.add_version(
            OWNER, dataset["id"], {"remove": [{"uri": "fs:/not/here.jpg"}]}
        )
    assert exc.value.code == "UNKNOWN_MEDIA"


def test_lineage_chain_of_three(stack, tmp_path):
    dataset, location = imported_dataset(stack, tmp_path)
    seed(location, {"c.jpg": b"bytes-c.jpg"})
    stack.catalog.add_version(
        OWNER, dataset["id"], {"add": [{"uri": str(location / "c.jpg")}]}
    )
    stack.catalog.add_version(
        OWNER, dataset["id"], {"remove": [{"uri": str(location / "a.jpg")}]}
    )
    lineage = stack.catalog.get_lineage(dataset["id"])
    labels = [v["label"] for v in lineage["versions"]]
    parents = [v["parent"] for v in lineage["versions"]]
    assert labels == ["v1", "v2", "v3"]
    assert parents == [None, "v1", "v2"]
    assert [v["media_count"] for v in lineage["versions"]] == [2, 3, 2]


def test_lineage_of_query_dataset_names_its_origin(stack, tmp_path):
    record, _ = suv_fixture(stack, tmp_path)
    dataset = stack.catalog.create_dataset_from_query(
        OWNER, record["id"], "vehicle_type = 'SUV'"
    )
    lineage = stack.catalog.get_lineage(dataset["id"])
    assert lineage["datasource"]["datasource_id"] == record["id"]
    assert lineage["versions"][0]["provenance"]["query_used"] == "vehicle_type = 'SUV'"


def test_lineage_lists_annotations(stack, tmp_path):
    dataset, location = imported_dataset(stack, tmp_path)
    manifest = tmp_path / "ann.jsonl"
    manifest.write_text(
        json.dumps({"uri": str(location / "a.jpg")}) + "\n", encoding="utf-8"
    )
    stack.catalog.attach_annotation(
        OWNER, dataset["id"], 1, "JSONL", "weak labels", {"manifest_path": str(manifest)}
    )
    lineage = stack.catalog.get_lineage(dataset["id"])
    assert [a["name"] for a in lineage["annotations"]] == ["weak labels"]
    assert stack.catalog.get_dataset(dataset["id"])["has_annotations"] is True


def test_lineage_unknown_dataset(stack):
    with pytest.raises(MetapixError) as exc:
        stack.catalog.get_lineage("dset-missing")
    assert exc.value.code == "UNKNOWN_DATASET"


# -- access control ---------------------------------------------------------------


def test_public_dataset_allows_anyone():
    dataset = {"id": "d", "creator_id": "c", "visibility": "PUBLIC"}
    assert bool(check_access(Principal("random"), dataset))


def test_gated_source_denies_wrong_role():
    source = {
        "id": "ds",
        "access_level": "GATED",
        "roles": ["cv-team"],
        "data_owner": "owner@team",
    }
    decision = check_access(Principal("u", ("mfg",)), source)
    assert not decision
    assert "cv-team" in decision.reason


def test_gated_source_allows_role_and_owner():
    source = {
        "id": "ds",
        "access_level": "GATED",
        "roles": ["cv-team"],
        "data_owner": "owner@team",
    }
    assert bool(check_access(Principal("u", ("cv-team", "mfg")), source))
    assert bool(check_access(Principal("owner@team"), source))


def test_restricted_dataset_inherits_denial():
    dataset = {
        "id": "d",
        "creator_id": "creator",
        "visibility": "RESTRICTED",
        "datasource": {
            "datasource_id": "ds",
            "roles": ["cv-team"],
            "data_owner": "owner@team",
            "access_level": "GATED",
        },
    }
    assert not check_access(Principal("u", ("mfg",)), dataset)
    assert bool(check_access(Principal("u", ("cv-team",)), dataset))
    assert bool(check_access(Principal("creator"), dataset))
    assert bool(check_access(Principal("owner@team"), dataset))


ROLE_NAMES = ("cv-team", "mfg", "quality", "labeling", "research")


@settings(max_examples=150, deadline=None)
@given(
    source_roles=st.sets(st.sampled_from(ROLE_NAMES), min_size=1, max_size=4),
    gated=st.booleans(),
    principal_roles=st.sets(st.sampled_from(ROLE_NAMES), max_size=4),
    user=st.sampled_from(["owner@team", "peer@team", "stranger@team"]),
)
def test_snapshot_dataset_access_equals_source_access(
    source_roles, gated, principal_roles, user
):
    """A dataset snapshotted from a source decides exactly like the source."""
    source = {
        "id": "ds-prop",
        "access_level": "GATED" if gated else "UNRESTRICTED",
        "roles": sorted(source_roles),
        "data_owner": "owner@team",
    }
    dataset = {
        "id": "dset-prop",
        "creator_id": "owner@team",
        "visibility": "RESTRICTED" if gated else "PUBLIC",
        "datasource": {
            "datasource_id": source["id"],
            "name": "prop",
            "data_owner": source["data_owner"],
            "roles": list(source["roles"]),
            "access_level": source["access_level"],
        },
    }
    principal = Principal(user, tuple(sorted(principal_roles)))
    assert bool(check_access(principal, dataset)) == bool(
        check_access(principal, source)
    )


# -- platform wiring: embedding jobs and crawl operations ---------------------------


def test_embeddings_enabled_source_queues_one_job_per_media(platform, tmp_path):
    location = tmp_path / "fleet"
    seed_captioned(
        location, {"a.jpg": b"img-a", "b.jpg": b"img-b", "c.jpg": b"img-c"}
    )
    record = platform.catalog.create_datasource(
        {
            "name": "fleet",
            "storage_locations": [str(location)],
            "data_owner": OWNER.user_id,
            "embeddings_enabled": True,
        }
    )
    platform.settle()

    ops = embedding_ops(platform.store)
    assert len(ops) == 3
    assert all(op["status"] == "SUCCEEDED" for op in ops)
    assert bus_topics(platform.root).count("embeddings.requested") == 3
    assert platform.index.size(Scope("datasource", record["id"])) == 3
    stamped = platform.catalog.get_datasource(record["id"])["operations"]
    assert sorted(stamped) == sorted(op["operation_id"] for op in ops)
    assert platform.catalog.get_datasource(record["id"])["media_count"] == 3


def test_duplicate_bytes_get_a_single_embedding_job(platform, tmp_path):
    location = tmp_path / "dups"
    seed_captioned(
        location, {"a.jpg": b"same-pixels", "b.jpg": b"same-pixels", "c.jpg": b"other"}
    )
    record = platform.catalog.create_datasource(
        {
            "name": "dups",
            "storage_locations": [str(location)],
            "embeddings_enabled": True,
        }
    )
    platform.settle()
    assert len(embedding_ops(platform.store)) == 2
    assert platform.index.size(Scope("datasource", record["id"])) == 2
    assert platform.catalog.get_datasource(record["id"])["media_count"] == 3


def test_disabled_source_queues_no_jobs(platform, tmp_path):
    location = tmp_path / "plain"
    seed(location, {"a.jpg": b"img"})
    platform.catalog.create_datasource(
        {"name": "plain", "storage_locations": [str(location)]}
    )
    platform.settle()
    assert embedding_ops(platform.store) == []


def test_query_dataset_inherits_embeddings_without_new_jobs(platform, tmp_path):
    location = tmp_path / "fleet"
    seed_captioned(location, {f"img{i}.jpg": b"px-%d" % i for i in range(3)})
    record = platform.catalog.create_datasource(
        {
            "name": "fleet",
            "storage_locations": [str(location)],
            "embeddings_enabled": True,
        }
    )
    platform.settle()
    before = len(embedding_ops(platform.store))
    assert before == 3

    dataset = platform.catalog.create_dataset_from_query(
        OWNER, record["id"], "size_bytes > 0"
    )
    platform.settle()
    assert len(embedding_ops(platform.store)) == before  # nothing new queued
    copied = platform.index.records_for(Scope("dataset", dataset["id"], version=1))
    source_hashes = {
        r["content_hash"]
        for r in platform.index.records_for(Scope("datasource", record["id"]))
    }
    assert {r["content_hash"] for r in copied} == source_hashes
    assert len(copied) == 3


def test_start_crawl_returns_pollable_operation(platform, tmp_path):
    location = tmp_path / "grow"
    location.mkdir()
    record = platform.catalog.create_datasource(
        {"name": "grow", "storage_locations": [str(location)]}
    )
    seed(location, {"late1.jpg": b"l1", "late2.jpg": b"l2"})
    operation_id = platform.start_crawl(record["id"])
    body = platform.runner.wait(operation_id)
    assert body["kind"] == "CRAWL"
    assert body["status"] == "SUCCEEDED"
    assert body["report"]["added"] == 2
    assert platform.catalog.get_datasource(record["id"])["media_count"] == 2


def test_start_crawl_unknown_datasource(platform):
    with pytest.raises(MetapixError) as exc:
        platform.start_crawl("ds-missing")
    assert exc.value.code == "UNKNOWN_DATASOURCE"


# -- conservation ------------------------------------------------------------------


def test_dedup_conservation_across_datasets(tmp_path):
    stack = Stack(tmp_path / "overlap")
    first = media_manifest(
        tmp_path, tmp_path / "m1", {"a.jpg": b"dup", "b.jpg": b"dup", "c.jpg": b"solo"}
    )
    stack.catalog.create_dataset_from_file(OWNER, first, "JSONL", name="one")
    second = tmp_path / "second.jsonl"
    location = tmp_path / "m2"
    seed(location, {"d.jpg": b"solo", "e.jpg": b"fresh"})
    second.write_text(
        json.dumps({"uri": str(location / "d.jpg")})
        + "\n"
        + json.dumps({"uri": str(location / "e.jpg")})
        + "\n",
        encoding="utf-8",
    )
    stack.catalog.create_dataset_from_file(OWNER, second, "JSONL", name="two")

    total_refs = sum(
        len(version["media_refs"])
        for dataset in stack.catalog.list_datasets()
        for version in dataset["versions"]
    )
    blob_count = len(stack.blobs.list_blobs())
    assert total_refs == 5
    assert blob_count == 3
    assert total_refs > blob_count  # shared bytes collapse

    distinct = Stack(tmp_path / "distinct")
    manifest = media_manifest(
        tmp_path, tmp_path / "m3", {"x.jpg": b"x", "y.jpg": b"y"}, name="dx.jsonl"
    )
    distinct.catalog.create_dataset_from_file(OWNER, manifest, "JSONL")
    refs = sum(
        len(v["media_refs"])
        for d in distinct.catalog.list_datasets()
        for v in d["versions"]
    )
    assert refs == len(distinct.blobs.list_blobs())  # all contents distinct
