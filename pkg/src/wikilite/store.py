"""Memory-mapped multi-table key-value store on top of LMDB.

One directory holds one database.  A build-mode handle is the only writer
and is guarded by an exclusive ``flock`` on ``build.lock``; read-mode
handles are only granted once the ``meta`` table carries the
build-complete marker, after which the directory is never written again.
Read handles therefore need no LMDB locking at all and any number of them
may coexist across threads and processes.  Within one process, read
handles on the same directory share a single LMDB environment (LMDB allows
only one per process), released when the last handle closes.
"""

from __future__ import annotations

import fcntl
import logging
import os
import threading
import time
from pathlib import Path
from typing import Iterator, Optional

import lmdb

from .errors import BuildExists, IncompleteBuild, LockHeld, ReadOnly, StoreError, TableUnknown

logger = logging.getLogger(__name__)

TABLES = (
    "meta", "id_map", "id_map_rev", "items", "inv_pv", "inv_v",
    "pagerank", "terms", "deletes", "postings_kw",
)
FORMAT_VERSION = "1"
BUILD_COMPLETE = "build_complete"
LOCK_NAME = "build.lock"
DEFAULT_MAP_SIZE = 1 << 38  # 256 GiB of address space, not disk
_OWN_FILES = {"data.mdb", "lock.mdb", LOCK_NAME, "spill"}

_registry_lock = threading.Lock()
_read_envs: dict[str, list] = {}  # realpath -> [env, dbs, refcount]
_build_paths: set[str] = set()


def _env_key(path: Path) -> str:
    return os.path.realpath(path)


class Store:
    """Handle on a database directory.

    Open with :meth:`open`.  In build mode writes go to one long-lived
    write transaction that is committed every ``commit_every`` puts and on
    :meth:`commit`; reads in build mode see uncommitted writes.
    """

    def __init__(self, path, mode: str, env: lmdb.Environment, lock_fd: Optional[int] = None,
                 commit_every: int = 50_000, dbs: Optional[dict] = None):
        self.path = Path(path)
        self.mode = mode
        self._env = env
        self._lock_fd = lock_fd
        if dbs is None:
            dbs = {name: env.open_db(name.encode(), create=(mode == "build")) for name in TABLES}
        self._dbs = dbs
        self._txn: Optional[lmdb.Transaction] = None
        self._pending = 0
        self.commit_every = commit_every

    @classmethod
    def open(cls, path, mode: str = "read", map_size: int = DEFAULT_MAP_SIZE) -> "Store":
        path = Path(path)
        if mode == "read":
            return cls._open_read(path)
        if mode == "build":
            return cls._open_build(path, map_size)
        raise ValueError(f"mode must be 'read' or 'build', not {mode!r}")

    @classmethod
    def _open_read(cls, path: Path) -> "Store":
        key = _env_key(path)
        with _registry_lock:
            if key in _build_paths:
                raise IncompleteBuild(f"{path}: a build is in progress in this process")
            entry = _read_envs.get(key)
            if entry is None:
                env = cls._open_read_env(path)
                try:
                    dbs = {name: env.open_db(name.encode(), create=False) for name in TABLES}
                except lmdb.NotFoundError:
                    env.close()
                    raise IncompleteBuild(f"{path}: tables missing") from None
                entry = _read_envs[key] = [env, dbs, 0]
            entry[2] += 1
        return cls(path, "read", entry[0], dbs=entry[1])

    @staticmethod
    def _open_read_env(path: Path) -> lmdb.Environment:
        if not (path / "data.mdb").is_file():
            raise IncompleteBuild(f"{path}: no database found")
        env = lmdb.open(str(path), readonly=True, lock=False, max_dbs=len(TABLES), subdir=True)
        try:
            with env.begin() as txn:
                meta = env.open_db(b"meta", txn=txn, create=False)
                marker = txn.get(BUILD_COMPLETE.encode(), db=meta)
        except lmdb.NotFoundError:
            marker = None
        if marker is None:
            env.close()
            raise IncompleteBuild(f"{path}: build-complete marker absent")
        return env

    @classmethod
    def _open_build(cls, path: Path, map_size: int) -> "Store":
        path.mkdir(parents=True, exist_ok=True)
        key = _env_key(path)
        with _registry_lock:
            if key in _read_envs:
                raise BuildExists(f"{path}: holds a completed build that is open for reading")
        stray = [p.name for p in path.iterdir() if p.name not in _OWN_FILES]
        if stray:
            raise StoreError(f"{path}: build directory is not empty ({', '.join(sorted(stray))})")
        fd = os.open(path / LOCK_NAME, os.O_RDWR | os.O_CREAT, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            os.close(fd)
            raise LockHeld(f"{path}: another build holds {LOCK_NAME}") from None
        try:
            env = lmdb.open(str(path), map_size=map_size, max_dbs=len(TABLES), subdir=True,
                            sync=False, metasync=False, readahead=False)
            store = cls(path, "build", env, lock_fd=fd)
        except Exception:
            os.close(fd)
            raise
        with _registry_lock:
            _build_paths.add(key)
        if store.meta_get(BUILD_COMPLETE) is not None:
            store.close()
            raise BuildExists(f"{path}: holds a completed build; build into a new directory")
        return store

    # lifecycle ---------------------------------------------------------------

    def close(self) -> None:
        if self._env is None:
            return
        if self._txn is not None:
            self._txn.abort()
            self._txn = None
        key = _env_key(self.path)
        with _registry_lock:
            if self.writable:
                self._env.close()
                _build_paths.discard(key)
            else:
                entry = _read_envs[key]
                entry[2] -= 1
                if entry[2] == 0:
                    del _read_envs[key]
                    entry[0].close()
        self._env = None
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def writable(self) -> bool:
        return self.mode == "build"

    def _db(self, table: str):
        try:
            return self._dbs[table]
        except KeyError:
            raise TableUnknown(table) from None

    def _write_txn(self) -> lmdb.Transaction:
        if not self.writable:
            raise ReadOnly(f"{self.path} is open read-only")
        if self._txn is None:
            self._txn = self._env.begin(write=True)
        return self._txn

    def commit(self) -> None:
        if self._txn is not None:
            self._txn.commit()
            self._txn = None
        self._pending = 0

    def sync(self) -> None:
        self.commit()
        self._env.sync(True)

    # key-value operations ------------------------------------------------------

    def put(self, table: str, key: bytes, value: bytes) -> None:
        db = self._db(table)
        self._write_txn().put(key, value, db=db)
        self._pending += 1
        if self._pending >= self.commit_every:
            self.commit()

    def delete(self, table: str, key: bytes) -> None:
        db = self._db(table)
        self._write_txn().delete(key, db=db)

    def get(self, table: str, key: bytes) -> Optional[bytes]:
        db = self._db(table)
        if self.writable:
            return self._write_txn().get(key, db=db)
        with self._env.begin(db=db) as txn:
            return txn.get(key)

    def get_many(self, table: str, keys) -> list[Optional[bytes]]:
        db = self._db(table)
        if self.writable:
            txn = self._write_txn()
            return [txn.get(k, db=db) for k in keys]
        with self._env.begin(db=db) as txn:
            return [txn.get(k) for k in keys]

    def scan(self, table: str, prefix: bytes = b"") -> Iterator[tuple[bytes, bytes]]:
        """Yield ``(key, value)`` pairs whose key starts with ``prefix``, ascending."""
        db = self._db(table)
        if self.writable:
            # copy out: the write transaction may be committed while we iterate
            txn = self._write_txn()
            with txn.cursor(db=db) as cur:
                rows = list(_prefix_rows(cur, prefix))
            yield from rows
            return
        with self._env.begin(db=db) as txn, txn.cursor() as cur:
            yield from _prefix_rows(cur, prefix)

    def iter_batches(self, table: str, batch: int = 10_000) -> Iterator[list[tuple[bytes, bytes]]]:
        """Scan a whole table in key order in bounded batches.

        Safe in build mode while other tables are being written.
        """
        db = self._db(table)
        last = None
        while True:
            if self.writable:
                txn, owned = self._write_txn(), False
            else:
                txn, owned = self._env.begin(db=db), True
            try:
                with txn.cursor(db=db) as cur:
                    found = cur.set_range(last) if last is not None else cur.first()
                    if found and last is not None and cur.key() == last:
                        found = cur.next()
                    rows = []
                    while found and len(rows) < batch:
                        rows.append((cur.key(), cur.value()))
                        found = cur.next()
            finally:
                if owned:
                    txn.abort()
            if not rows:
                return
            yield rows
            last = rows[-1][0]

    def clear(self, table: str) -> None:
        self._write_txn().drop(self._db(table), delete=False)

    def count(self, table: str) -> int:
        return self._stat(table)["entries"]

    def table_bytes(self, table: str) -> int:
        st = self._stat(table)
        return st["psize"] * (st["branch_pages"] + st["leaf_pages"] + st["overflow_pages"])

    def _stat(self, table: str) -> dict:
        db = self._db(table)
        if self.writable:
            return self._write_txn().stat(db)
        with self._env.begin() as txn:
            return txn.stat(db)

    # meta and stage checkpoints ------------------------------------------------

    def meta_get(self, name: str) -> Optional[str]:
        value = self.get("meta", name.encode())
        return None if value is None else value.decode()

    def meta_put(self, name: str, value) -> None:
        self.put("meta", name.encode(), str(value).encode())

    def meta(self) -> dict[str, str]:
        return {k.decode(): v.decode() for k, v in self.scan("meta")}

    def stage_done(self, stage: str) -> bool:
        return self.meta_get(f"stage:{stage}") is not None

    def mark_stage(self, stage: str) -> None:
        self.meta_put(f"stage:{stage}", time.strftime("%Y-%m-%dT%H:%M:%S"))
        self.commit()

    def mark_complete(self) -> None:
        self.meta_put("format_version", FORMAT_VERSION)
        self.meta_put(BUILD_COMPLETE, "1")
        self.sync()


def _prefix_rows(cur, prefix: bytes):
    if not cur.set_range(prefix):
        return
    for key, value in cur:
        if not key.startswith(prefix):
            break
        yield key, value


def open_store(path, mode: str = "read", **kwargs) -> Store:
    return Store.open(path, mode, **kwargs)
