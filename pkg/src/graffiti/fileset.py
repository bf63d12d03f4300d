"""Fileset geometry: manifests, splitting into sub-pieces, and reassembly.

A fileset is one or more files concatenated in listed order. The byte stream
is cut into pieces of ``piece_length`` bytes (the last may be short) and each
piece into sub-pieces of ``subpiece_length`` bytes. Sub-pieces are the unit
of replication; pieces are the unit peers advertise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path, PurePosixPath
from typing import Iterable, Mapping, Sequence

from . import canonical
from .errors import (
    CorruptionError,
    EmptyInputError,
    GeometryError,
    IncompleteError,
    IntegrityError,
)

MANIFEST_VERSION = 1
MANIFEST_SUFFIX = ".graffiti.json"

DEFAULT_PIECE_LENGTH = 512 * 1024
DEFAULT_SUBPIECE_LENGTH = 64 * 1024


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True, order=True)
class SubPieceRef:
    piece_index: int
    subpiece_index: int
    length: int = field(compare=False)
    checksum: str | None = field(default=None, compare=False)

    @property
    def key(self) -> tuple[int, int]:
        return (self.piece_index, self.subpiece_index)


@dataclass(frozen=True)
class FilesetManifest:
    name: str
    files: tuple[tuple[str, int], ...]
    piece_length: int
    subpiece_length: int
    piece_checksums: tuple[str, ...]
    tracker_url: str
    info_hash: str = ""
    version: int = MANIFEST_VERSION

    # geometry ---------------------------------------------------------------

    @property
    def total_length(self) -> int:
        return sum(length for _, length in self.files)

    @property
    def num_pieces(self) -> int:
        return len(self.piece_checksums)

    @property
    def subpieces_per_piece(self) -> int:
        return self.piece_length // self.subpiece_length

    def piece_size(self, index: int) -> int:
        start = index * self.piece_length
        return max(0, min(self.piece_length, self.total_length - start))

    def subpiece_layout(self) -> list[SubPieceRef]:
        """All sub-pieces in file order, without checksums."""
        refs = []
        for p in range(self.num_pieces):
            size = self.piece_size(p)
            for s in range(math.ceil(size / self.subpiece_length)):
                length = min(self.subpiece_length, size - s * self.subpiece_length)
                refs.append(SubPieceRef(p, s, length))
        return refs

    @property
    def num_subpieces(self) -> int:
        return sum(math.ceil(self.piece_size(p) / self.subpiece_length) for p in range(self.num_pieces))

    def ordinal(self, ref: SubPieceRef | tuple[int, int]) -> int:
        p, s = ref.key if isinstance(ref, SubPieceRef) else ref
        return p * self.subpieces_per_piece + s

    def ref_for_ordinal(self, ordinal: int) -> SubPieceRef:
        p, s = divmod(ordinal, self.subpieces_per_piece)
        size = self.piece_size(p)
        length = min(self.subpiece_length, size - s * self.subpiece_length)
        if p >= self.num_pieces or length <= 0:
            raise IndexError(f"ordinal {ordinal} outside manifest")
        return SubPieceRef(p, s, length)

    def offset(self, ref: SubPieceRef) -> int:
        return ref.piece_index * self.piece_length + ref.subpiece_index * self.subpiece_length

    # serialization ----------------------------------------------------------

    def body(self) -> dict:
        return {
            "version": self.version,
            "name": self.name,
            "files": [{"path": p, "length": n} for p, n in self.files],
            "piece_length": self.piece_length,
            "subpiece_length": self.subpiece_length,
            "piece_checksums": list(self.piece_checksums),
            "tracker_url": self.tracker_url,
        }

    def compute_info_hash(self) -> str:
        return digest(canonical.dump_bytes(self.body()))

    def to_dict(self) -> dict:
        return {**self.body(), "info_hash": self.info_hash}

    def to_json(self) -> bytes:
        return canonical.dump_bytes(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "FilesetManifest":
        m = cls(
            name=d["name"],
            files=tuple((f["path"], int(f["length"])) for f in d["files"]),
            piece_length=int(d["piece_length"]),
            subpiece_length=int(d["subpiece_length"]),
            piece_checksums=tuple(d["piece_checksums"]),
            tracker_url=d["tracker_url"],
            info_hash=d.get("info_hash", ""),
            version=int(d.get("version", MANIFEST_VERSION)),
        )
        expected = m.compute_info_hash()
        if m.info_hash and m.info_hash != expected:
            raise IntegrityError("manifest info_hash does not match its body")
        return replace(m, info_hash=expected)

    @classmethod
    def from_json(cls, raw: bytes | str) -> "FilesetManifest":
        return cls.from_dict(json.loads(raw))

    def save(self, path: str | Path) -> None:
        canonical.write_atomic(path, self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "FilesetManifest":
        return cls.from_json(Path(path).read_bytes())


def _check_geometry(piece_length: int, subpiece_length: int) -> None:
    if subpiece_length <= 0 or piece_length <= 0:
        raise GeometryError("piece and sub-piece lengths must be positive")
    if piece_length % subpiece_length:
        raise GeometryError(
            f"piece length {piece_length} is not a multiple of sub-piece length {subpiece_length}"
        )


def _clean_path(path: str) -> str:
    p = PurePosixPath(str(path).replace("\\", "/"))
    if p.is_absolute() or ".." in p.parts or not p.parts:
        raise ValueError(f"unsafe fileset path: {path!r}")
    return str(p)


def build_manifest(
    files: Sequence[tuple[str, bytes]],
    piece_length: int = DEFAULT_PIECE_LENGTH,
    subpiece_length: int = DEFAULT_SUBPIECE_LENGTH,
    tracker_url: str = "",
    name: str | None = None,
) -> FilesetManifest:
    _check_geometry(piece_length, subpiece_length)
    data = b"".join(content for _, content in files)
    if not data:
        raise EmptyInputError("fileset contains no bytes")
    checksums = tuple(
        digest(data[i:i + piece_length]) for i in range(0, len(data), piece_length)
    )
    entries = tuple((_clean_path(p), len(content)) for p, content in files)
    m = FilesetManifest(
        name=name if name is not None else entries[0][0],
        files=entries,
        piece_length=piece_length,
        subpiece_length=subpiece_length,
        piece_checksums=checksums,
        tracker_url=tracker_url,
    )
    return replace(m, info_hash=m.compute_info_hash())


def split(data: bytes, manifest: FilesetManifest) -> list[tuple[SubPieceRef, bytes]]:
    if len(data) != manifest.total_length:
        raise IntegrityError(
            f"fileset is {len(data)} bytes, manifest expects {manifest.total_length}"
        )
    out = []
    for ref in manifest.subpiece_layout():
        start = manifest.offset(ref)
        block = data[start:start + ref.length]
        out.append((replace(ref, checksum=digest(block)), block))
    return out


def assemble(blocks: Mapping[SubPieceRef, bytes], manifest: FilesetManifest) -> bytes:
    layout = manifest.subpiece_layout()
    by_ordinal: dict[int, tuple[SubPieceRef, bytes]] = {}
    for ref, block in blocks.items():
        o = manifest.ordinal(ref)
        if o in by_ordinal:
            raise IntegrityError(f"sub-piece {ref.piece_index}/{ref.subpiece_index} supplied twice")
        by_ordinal[o] = (ref, block)

    missing = [manifest.ordinal(r) for r in layout if manifest.ordinal(r) not in by_ordinal]
    if missing:
        raise IncompleteError(missing)

    for expected in layout:
        ref, block = by_ordinal[manifest.ordinal(expected)]
        if len(block) != expected.length:
            raise CorruptionError(ref, "length mismatch")
        if ref.checksum is not None and digest(block) != ref.checksum:
            raise CorruptionError(ref)

    data = b"".join(by_ordinal[manifest.ordinal(r)][1] for r in layout)
    for p, want in enumerate(manifest.piece_checksums):
        if digest(data[p * manifest.piece_length:(p + 1) * manifest.piece_length]) != want:
            # Only reachable when refs carried no sub-piece checksum.
            first = by_ordinal[p * manifest.subpieces_per_piece][0]
            raise CorruptionError(first, f"piece {p} checksum mismatch")
    return data


def files_from_bytes(data: bytes, manifest: FilesetManifest) -> list[tuple[str, bytes]]:
    """Undo the concatenation of a multi-file fileset."""
    out, pos = [], 0
    for path, length in manifest.files:
        out.append((path, data[pos:pos + length]))
        pos += length
    return out


def read_files(paths: Iterable[str | Path]) -> list[tuple[str, bytes]]:
    return [(Path(p).name, Path(p).read_bytes()) for p in paths]


def encode_bitfield(pieces: Iterable[int], count: int) -> bytes:
    """Piece bitfield, most significant bit first (BitTorrent layout)."""
    bits = bytearray((count + 7) // 8)
    for p in pieces:
        if not 0 <= p < count:
            raise IndexError(f"piece {p} outside 0..{count - 1}")
        bits[p // 8] |= 0x80 >> (p % 8)
    return bytes(bits)


def decode_bitfield(bits: bytes, count: int) -> set[int]:
    return {p for p in range(min(count, 8 * len(bits))) if bits[p // 8] & (0x80 >> (p % 8))}
