"""Episode store: token registry, content-addressed files, rebuildable index.

Layout under the store directory:

    tokens.txt                   token registry ("token user_id [admin]" lines)
    users/<user_id>/<episode_id>.dxe
    users/<user_id>/<episode_id>.curated     (marker file)
    index.json                   derived cache, rebuildable by scanning

Writes go to a temp file in the same directory and are renamed into place,
so a crash at any byte boundary leaves either no episode or a whole one.
The index is a cache of the filesystem truth and is rebuilt on any doubt.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .episode import EpisodeError, parse_episode


class StoreError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status  # mirrors the HTTP status the API returns


@dataclass
class TokenInfo:
    token: str
    user_id: str
    admin: bool = False
    revoked: bool = False
    issued_at: float = field(default_factory=time.time)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.token.encode()).hexdigest()[:16]


class TokenRegistry:
    """Opaque bearer tokens, one user each; file-backed."""

    def __init__(self, path: Path | None = None):
        self.path = path
        self._by_token: dict[str, TokenInfo] = {}
        self._lock = threading.Lock()
        if path is not None and path.exists():
            self._load()

    def _load(self) -> None:
        for line in self.path.read_text().splitlines():
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            info = TokenInfo(parts[0], parts[1], admin="admin" in parts[2:],
                             revoked="revoked" in parts[2:])
            self._by_token[info.token] = info

    def _save(self) -> None:
        if self.path is None:
            return
        lines = []
        for info in self._by_token.values():
            flags = (" admin" if info.admin else "") + \
                    (" revoked" if info.revoked else "")
            lines.append(f"{info.token} {info.user_id}{flags}")
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text("\n".join(lines) + "\n")
        os.replace(tmp, self.path)

    def issue(self, user_id: str, admin: bool = False) -> TokenInfo:
        token = secrets.token_hex(32)  # 32 bytes entropy
        info = TokenInfo(token, user_id, admin)
        with self._lock:
            self._by_token[token] = info
            self._save()
        return info

    def revoke(self, token: str) -> None:
        with self._lock:
            if token in self._by_token:
                self._by_token[token].revoked = True
                self._save()

    def authenticate(self, token: str | None) -> TokenInfo:
        with self._lock:
            info = self._by_token.get(token or "")
            if info is None and self.path is not None and self.path.exists():
                # tokens may be issued out of band by the admin CLI while
                # the server runs; pick up additions on a miss
                self._load()
                info = self._by_token.get(token or "")
        if info is None or info.revoked:
            raise StoreError(401, "invalid or revoked token")
        return info


@dataclass
class IndexEntry:
    episode_id: str
    user_id: str
    path: str
    size: int
    scene_id: str
    created_at: float
    digest: str
    curated: bool = False

    def to_json(self) -> dict:
        return self.__dict__.copy()


class EpisodeStore:
    """Filesystem-backed episode storage with attribution."""

    def __init__(self, root: Path, max_bytes: int | None = None):
        self.root = Path(root)
        self.users_dir = self.root / "users"
        self.users_dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.json"
        self.max_bytes = max_bytes
        self._lock = threading.Lock()
        self._index: dict[str, IndexEntry] = {}
        if self.index_path.exists():
            try:
                self._load_index()
            except (json.JSONDecodeError, KeyError, TypeError):
                self.rebuild_index()
        else:
            self.rebuild_index()

    # -- index persistence ----------------------------------------------------

    def _load_index(self) -> None:
        raw = json.loads(self.index_path.read_text())
        self._index = {e["episode_id"]: IndexEntry(**e) for e in raw}

    def _save_index(self) -> None:
        tmp = self.index_path.with_suffix(".tmp")
        tmp.write_text(json.dumps([e.to_json() for e in self._index.values()],
                                  indent=0))
        os.replace(tmp, self.index_path)

    def rebuild_index(self) -> int:
        """Rescan the directory tree; the files are the source of truth."""
        with self._lock:
            index: dict[str, IndexEntry] = {}
            for path in sorted(self.users_dir.glob("*/*.dxe")):
                try:
                    data = path.read_bytes()
                    log = parse_episode(data)
                except (OSError, EpisodeError):
                    continue  # partial or foreign file: not an episode
                entry = IndexEntry(
                    episode_id=log.episode_id,
                    user_id=path.parent.name,
                    path=str(path.relative_to(self.root)),
                    size=len(data),
                    scene_id=log.metadata.get("scene_id", ""),
                    created_at=path.stat().st_mtime,
                    digest=hashlib.sha256(data).hexdigest(),
                    curated=path.with_suffix(".curated").exists(),
                )
                index[entry.episode_id] = entry
            self._index = index
            self._save_index()
            return len(index)

    # -- operations -------------------------------------------------------

    def store_bytes(self, user_id: str, data: bytes,
                    token_fingerprint: str = "") -> str:
        """Persist an episode file for a user; idempotent on duplicates."""
        try:
            log = parse_episode(data)
        except EpisodeError as exc:
            raise StoreError(400, f"malformed episode: {exc}") from exc
        episode_id = log.episode_id
        digest = hashlib.sha256(data).hexdigest()

        with self._lock:
            existing = self._index.get(episode_id)
            if existing is not None:
                if existing.digest == digest:
                    return episode_id  # idempotent re-upload
                raise StoreError(409, f"episode {episode_id} exists with "
                                      "different content")
            if self.max_bytes is not None:
                used = sum(e.size for e in self._index.values())
                if used + len(data) > self.max_bytes:
                    raise StoreError(507, "store full")

            user_dir = self.users_dir / user_id
            user_dir.mkdir(parents=True, exist_ok=True)
            final = user_dir / f"{episode_id}.dxe"
            tmp = user_dir / f".{episode_id}.tmp"
            try:
                with open(tmp, "wb") as fh:
                    fh.write(data)
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, final)
            except OSError:
                tmp.unlink(missing_ok=True)
                raise
            self._index[episode_id] = IndexEntry(
                episode_id=episode_id, user_id=user_id,
                path=str(final.relative_to(self.root)), size=len(data),
                scene_id=log.metadata.get("scene_id", ""),
                created_at=time.time(), digest=digest)
            self._save_index()
        return episode_id

    def upload(self, token: TokenInfo, data: bytes) -> str:
        return self.store_bytes(token.user_id, data, token.fingerprint())

    def list_user(self, user_id: str) -> list[IndexEntry]:
        with self._lock:
            entries = [e for e in self._index.values() if e.user_id == user_id]
        return sorted(entries, key=lambda e: (-e.created_at, e.episode_id))

    def list_curated(self) -> list[IndexEntry]:
        with self._lock:
            entries = [e for e in self._index.values() if e.curated]
        return sorted(entries, key=lambda e: (-e.created_at, e.episode_id))

    def fetch(self, episode_id: str, user_id: str | None = None,
              allow_curated: bool = True) -> bytes:
        """Exact stored bytes, digest-verified. Owner or curated access."""
        with self._lock:
            entry = self._index.get(episode_id)
        if entry is None:
            raise StoreError(404, f"unknown episode {episode_id}")
        if user_id is not None and entry.user_id != user_id and \
                not (allow_curated and entry.curated):
            raise StoreError(403, "not the owner and not curated")
        data = (self.root / entry.path).read_bytes()
        if hashlib.sha256(data).hexdigest() != entry.digest:
            raise StoreError(500, f"stored episode {episode_id} corrupt")
        return data

    def set_curated(self, episode_id: str, curated: bool = True) -> None:
        with self._lock:
            entry = self._index.get(episode_id)
            if entry is None:
                raise StoreError(404, f"unknown episode {episode_id}")
            marker = (self.root / entry.path).with_suffix(".curated")
            if curated:
                marker.touch()
            else:
                marker.unlink(missing_ok=True)
            entry.curated = curated
            self._save_index()

    def entry(self, episode_id: str) -> IndexEntry:
        with self._lock:
            entry = self._index.get(episode_id)
        if entry is None:
            raise StoreError(404, f"unknown episode {episode_id}")
        return entry

    def entries(self) -> list[IndexEntry]:
        with self._lock:
            return list(self._index.values())
