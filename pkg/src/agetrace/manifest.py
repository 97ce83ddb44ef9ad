"""Dataset manifests: JSON-lines, one record per image.

Records carrying a ``class_label`` belong to the trusted set; records
without one are untrusted queries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import InvalidArgument
from .imageio import read_image
from .imaging import AcquisitionMeta, RasterImage

SCHEMA_VERSION = 1


@dataclass
class ManifestRecord:
    path: str
    meta: AcquisitionMeta
    session_index: int
    class_label: Optional[int] = None

    @property
    def trusted(self) -> bool:
        return self.class_label is not None

    def as_dict(self, dataset_id: str) -> dict:
        d = {"path": self.path, **self.meta.as_dict(), "session_index": self.session_index}
        d["class_label"] = self.class_label
        d["dataset_id"] = dataset_id
        d["schema_version"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestRecord":
        try:
            meta = AcquisitionMeta.from_dict(d)
            label = d.get("class_label")
            return cls(str(d["path"]), meta, int(d["session_index"]), None if label is None else int(label))
        except KeyError as exc:
            raise InvalidArgument(f"manifest record missing field {exc.args[0]!r}") from None


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]
    dataset_id: str = "dataset"
    schema_version: int = SCHEMA_VERSION
    root: Path = field(default_factory=Path)

    def resolve(self, record: ManifestRecord) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() else self.root / p

    def load(self, record: ManifestRecord) -> RasterImage:
        return read_image(self.resolve(record))

    def select(self, *, kind: Optional[str] = None, trusted: Optional[bool] = None) -> list[ManifestRecord]:
        out = []
        for r in self.records:
            if kind is not None and r.meta.kind != kind:
                continue
            if trusted is not None and r.trusted != trusted:
                continue
            out.append(r)
        return sorted(out, key=lambda r: (r.meta.timestamp, r.path))

    def validate(self, check_paths: bool = True):
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidArgument(f"unrecognized manifest schema_version {self.schema_version}")
        spans: dict[int, list[float]] = {}
        for r in self.records:
            lo, hi = spans.get(r.session_index, [r.meta.timestamp, r.meta.timestamp])
            spans[r.session_index] = [min(lo, r.meta.timestamp), max(hi, r.meta.timestamp)]
        ordered = sorted(spans)
        for a, b in zip(ordered, ordered[1:]):
            if spans[b][0] < spans[a][1]:
                raise InvalidArgument(f"session {b} has images older than session {a}")
        if check_paths:
            for r in self.records:
                if not self.resolve(r).exists():
                    raise FileNotFoundError(f"manifest image not found: {self.resolve(r)}")

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(r.as_dict(self.dataset_id), sort_keys=True) for r in self.records]
        path.write_text("\n".join(lines) + ("\n" if lines else ""))
        return path


def read_manifest(path, check_paths: bool = True) -> DatasetManifest:
    path = Path(path)
    records, ids, versions = [], set(), set()
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"{path}:{n}: not valid JSON ({exc.msg})") from None
        records.append(ManifestRecord.from_dict(d))
        ids.add(d.get("dataset_id", "dataset"))
        versions.add(int(d.get("schema_version", SCHEMA_VERSION)))
    if len(versions) > 1:
        raise InvalidArgument(f"{path}: mixed schema versions {sorted(versions)}")
    manifest = DatasetManifest(
        records,
        dataset_id=sorted(ids)[0] if ids else "dataset",
        schema_version=versions.pop() if versions else SCHEMA_VERSION,
        root=path.parent,
    )
    manifest.validate(check_paths)
    return manifest

