"""Append-only, content-addressed provenance store for session artifacts.

Every committed version writes a ProvenanceRecord JSON plus its artifact
files, named by content hash; records chain to their parent by version tag
and are verified hash-consistent when walked.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .edits import ProvenanceRecord
from .errors import ProvenanceError


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ProvenanceStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.records_dir = self.root / "records"
        self.objects_dir = self.root / "objects"
        self.records_dir.mkdir(parents=True, exist_ok=True)
        self.objects_dir.mkdir(parents=True, exist_ok=True)

    def put_object(self, data: bytes) -> str:
        digest = sha256_bytes(data)
        path = self.objects_dir / digest
        if not path.exists():
            path.write_bytes(data)
        return digest

    def get_object(self, digest: str) -> bytes:
        path = self.objects_dir / digest
        if not path.exists():
            raise ProvenanceError(f"missing object {digest}")
        data = path.read_bytes()
        if sha256_bytes(data) != digest:
            raise ProvenanceError(f"object {digest} is corrupt")
        return data

    def put_record(self, record: ProvenanceRecord) -> str:
        data = (json.dumps(record.to_json(), indent=2, sort_keys=True) + "\n").encode("utf-8")
        path = self.records_dir / f"{record.version_tag}.json"
        if path.exists():
            raise ProvenanceError(f"record for {record.version_tag} already exists (append-only)")
        path.write_bytes(data)
        return sha256_bytes(data)

    def get_record(self, version_tag: str) -> ProvenanceRecord:
        path = self.records_dir / f"{version_tag}.json"
        if not path.exists():
            raise ProvenanceError(f"no provenance record for {version_tag}")
        return ProvenanceRecord.from_json(json.loads(path.read_text(encoding="utf-8")))

    def tags(self) -> list[str]:
        return sorted(p.stem for p in self.records_dir.glob("*.json"))

    def chain(self, version_tag: str) -> list[ProvenanceRecord]:
        """Walk tag -> root; verifies uniqueness and hash consistency."""
        out: list[ProvenanceRecord] = []
        seen: set[str] = set()
        tag: str | None = version_tag
        while tag is not None:
            if tag in seen:
                raise ProvenanceError(f"provenance cycle at {tag}")
            seen.add(tag)
            record = self.get_record(tag)
            if record.script_sha256:
                self.get_object(record.script_sha256)  # existence + integrity
            out.append(record)
            tag = record.parent_tag
        return list(reversed(out))
