import json
import math
import os
import random

import pytest
from cryptography.hazmat.primitives import hashes
from hypothesis import given, settings, strategies as st

from graffiti.errors import CorruptionError, EmptyInputError, GeometryError, IncompleteError, IntegrityError
from graffiti.fileset import FilesetManifest, SubPieceRef, assemble, build_manifest, split

PIECE = 524_288
SUB = 65_536


def sha256_oracle(data: bytes) -> str:
    # Independent implementation (OpenSSL via cryptography) to cross-check hashlib.
    h = hashes.Hash(hashes.SHA256())
    h.update(data)
    return h.finalize().hex()


@pytest.fixture
def blob():
    return random.Random(1).randbytes(1_572_864)


def test_default_geometry_counts(blob):
    m = build_manifest([("iso.bin", blob)], PIECE, SUB, "http://t")
    assert m.num_pieces == 3
    layout = m.subpiece_layout()
    assert len(layout) == 24
    assert {r.length for r in layout} == {SUB}


def test_short_last_piece():
    m = build_manifest([("f", bytes(600_000))], PIECE, SUB)
    assert [m.piece_size(i) for i in range(m.num_pieces)] == [524_288, 75_712]
    last = [r.length for r in m.subpiece_layout() if r.piece_index == 1]
    assert last == [65_536, 10_176]


def test_single_subpiece_boundary():
    m = build_manifest([("f", bytes(65_536))], PIECE, SUB)
    assert m.num_pieces == 1
    assert len(split(bytes(65_536), m)) == 1


def test_build_is_deterministic(blob):
    a = build_manifest([("iso.bin", blob)], PIECE, SUB, "http://t")
    b = build_manifest([("iso.bin", blob)], PIECE, SUB, "http://t")
    assert a.to_json() == b.to_json()
    assert a.info_hash == b.info_hash


def test_geometry_and_empty_errors():
    with pytest.raises(GeometryError):
        build_manifest([("f", b"x")], 100_000, SUB)
    with pytest.raises(EmptyInputError):
        build_manifest([("f", b"")], PIECE, SUB)


def test_canonical_form_and_reload(blob, tmp_path):
    m = build_manifest([("iso.bin", blob)], PIECE, SUB, "http://t")
    raw = m.to_json()
    assert b" " not in raw and b"\n" not in raw
    d = json.loads(raw)
    assert list(d) == sorted(d)
    # shuffled key order and pretty printing hash identically
    shuffled = dict(reversed(list(d.items())))
    again = FilesetManifest.from_json(json.dumps(shuffled, indent=2))
    assert again.info_hash == m.info_hash
    p = tmp_path / "x.graffiti.json"
    m.save(p)
    assert FilesetManifest.load(p) == m


def test_tampered_manifest_rejected(blob):
    d = json.loads(build_manifest([("f", blob)], PIECE, SUB).to_json())
    d["tracker_url"] = "http://evil"
    with pytest.raises(IntegrityError):
        FilesetManifest.from_dict(d)


def test_multi_file_concatenation():
    m = build_manifest([("a", b"x" * 70_000), ("dir/b", b"y" * 10)], PIECE, SUB)
    assert m.total_length == 70_010
    assert m.files == (("a", 70_000), ("dir/b", 10))
    with pytest.raises(ValueError):
        build_manifest([("../a", b"x")], PIECE, SUB)


def test_split_checksums_match_oracle(blob):
    m = build_manifest([("f", blob)], PIECE, SUB)
    parts = split(blob, m)
    offset = 0
    for ref, block in parts:
        assert block == blob[offset:offset + ref.length]
        assert ref.checksum == sha256_oracle(block)
        offset += ref.length
    assert b"".join(b for _, b in parts) == blob
    for p in range(m.num_pieces):
        assert m.piece_checksums[p] == sha256_oracle(blob[p * PIECE:(p + 1) * PIECE])


def test_split_length_mismatch(blob):
    m = build_manifest([("f", blob)], PIECE, SUB)
    with pytest.raises(IntegrityError):
        split(blob[:-1], m)


def test_ordinals_increase(blob):
    m = build_manifest([("f", blob[:600_000])], PIECE, SUB)
    ords = [m.ordinal(r) for r in m.subpiece_layout()]
    assert ords == sorted(set(ords))
    assert all(m.ref_for_ordinal(o).key == r.key for o, r in zip(ords, m.subpiece_layout()))


def test_assemble_roundtrip(blob):
    m = build_manifest([("f", blob)], PIECE, SUB)
    assert assemble(dict(split(blob, m)), m) == blob


def test_assemble_missing_names_ordinal(blob):
    m = build_manifest([("f", blob)], PIECE, SUB)
    blocks = dict(split(blob, m))
    ref = m.subpiece_layout()[13]
    del blocks[ref]
    with pytest.raises(IncompleteError) as ei:
        assemble(blocks, m)
    assert ei.value.missing == [13]


def test_assemble_bitflip_names_ref(blob):
    m = build_manifest([("f", blob)], PIECE, SUB)
    parts = split(blob, m)
    ref, block = parts[5]
    bad = bytearray(block)
    bad[100] ^= 0x01
    blocks = dict(parts)
    blocks[ref] = bytes(bad)
    with pytest.raises(CorruptionError) as ei:
        assemble(blocks, m)
    assert ei.value.ref.key == ref.key


def test_assemble_without_subpiece_checksums_uses_piece_checksum(blob):
    m = build_manifest([("f", blob)], PIECE, SUB)
    blocks = {SubPieceRef(r.piece_index, r.subpiece_index, r.length): b for r, b in split(blob, m)}
    assert assemble(blocks, m) == blob
    first = next(iter(blocks))
    blocks[first] = bytes(len(blocks[first]))
    with pytest.raises(CorruptionError):
        assemble(blocks, m)


@st.composite
def geometry_and_data(draw):
    sub = draw(st.sampled_from([1, 7, 64, 512, 4096, 65_536]))
    piece = sub * draw(st.integers(1, 16))
    size = draw(st.integers(1, 4 * 1024 * 1024))
    seed = draw(st.integers(0, 2**32 - 1))
    return piece, sub, random.Random(seed).randbytes(size)


@settings(max_examples=40, deadline=None)
@given(geometry_and_data())
def test_roundtrip_and_counting_property(gd):
    piece, sub, data = gd
    m = build_manifest([("f", data)], piece, sub)
    parts = split(data, m)
    assert m.num_pieces == math.ceil(len(data) / piece)
    assert len(parts) == sum(math.ceil(m.piece_size(p) / sub) for p in range(m.num_pieces))
    assert assemble(dict(parts), m) == data
