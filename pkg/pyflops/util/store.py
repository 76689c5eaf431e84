import asyncio
from os.path import isfile
from typing import Any, Optional, TypedDict

import aiofiles
import ruyaml as yaml

from pyflops.const import LOG, MANIFEST_FLUSH_EVERY
from pyflops.util import plain


class CellDict(TypedDict, total=False):
    target: str
    sampler: str
    steps: int
    seed: int
    status: str
    error: Optional[str]
    nfe: int
    wall_ms: float
    x0_digest: str
    report: dict[str, Any]
    endpoint: Optional[str]


class ManifestDict(TypedDict, total=False):
    kind: str
    config_hash: str
    config: dict[str, Any]
    tool_version: str
    tool: str
    platform: str
    started_at: str
    finished_at: Optional[str]
    output: str
    csv: str
    exact_samples: dict[str, str]
    cells: dict[str, CellDict]
    warnings: list[str]


def load_document(content: str) -> dict[str, Any]:
    payload: dict[str, Any] = yaml.safe_load(content) or {}
    return payload


def dump_document(document: dict[str, Any]) -> str:
    return str(yaml.dump(plain(document), default_flow_style=False))


async def read_document(path: str) -> dict[str, Any]:
    """Read in a YAML document.
    :param path: filename where to read the document
    :type path: ``str``
    :rtype: ``dict``
    """
    if not isfile(path):
        return {}
    async with aiofiles.open(path, mode="r") as yaml_file:
        LOG.debug(f"Loading {path}")
        content = await yaml_file.read()
    return load_document(content)


class DocumentStore:
    """A YAML document kept in memory and written by a single owner.

    Sections merged from concurrent tasks are buffered and hit the disk every
    ``flush_every`` merges, and on :meth:`flush`. Must be created inside the
    event loop that uses it.
    """

    def __init__(self, path: str, flush_every: int = MANIFEST_FLUSH_EVERY) -> None:
        self.path = path
        self.flush_every = flush_every
        self.document: dict[str, Any] = {}
        self.pending = 0
        self._lock = asyncio.Lock()

    async def read(self) -> dict[str, Any]:
        return await read_document(self.path)

    async def write(self, document: dict[str, Any]) -> None:
        async with self._lock:
            self.document = dict(document)
            await self._write()

    async def _write(self) -> None:
        async with aiofiles.open(self.path, mode="w") as yaml_file:
            LOG.debug(f"Saving {self.path}")
            await yaml_file.write(dump_document(self.document))
        self.pending = 0

    async def merge(self, key: str, section: dict[str, Any]) -> None:
        """Merge one section into the document.
        :param key: Top-level key name
        :type key: ``str``
        :param section: Mapping merged over the current value of ``key``
        :type section: ``dict``
        """
        current = self.document.get(key) or {}
        current.update(section)
        self.document[key] = current
        self.pending += 1
        if self.pending >= self.flush_every:
            async with self._lock:
                await self._write()

    async def flush(self, updates: Optional[dict[str, Any]] = None) -> dict[str, Any]:
        """Apply top-level ``updates`` and write the document out."""
        async with self._lock:
            self.document.update(updates or {})
            await self._write()
        return self.document
