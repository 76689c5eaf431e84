import asyncio

from pyflops.util.store import DocumentStore


def test_merges_are_buffered_until_flush(tmp_path):
    path = str(tmp_path / "manifest.yaml")

    async def scenario():
        store = DocumentStore(path, flush_every=1000)
        await store.write({"kind": "sweep", "cells": {}})
        for i in range(5):
            await store.merge("cells", {f"c{i}": {"status": "ok"}})
        on_disk = await store.read()
        await store.flush({"finished_at": "2026-01-01T00:00:00+00:00"})
        return on_disk, await store.read()

    before, after = asyncio.run(scenario())
    assert before["cells"] == {}
    assert sorted(after["cells"]) == ["c0", "c1", "c2", "c3", "c4"]
    assert after["kind"] == "sweep"
    assert after["finished_at"]


def test_merges_are_written_in_batches(tmp_path):
    path = str(tmp_path / "manifest.yaml")

    async def scenario():
        store = DocumentStore(path, flush_every=3)
        await store.write({"cells": {}})
        seen = []
        for i in range(7):
            await store.merge("cells", {f"c{i}": {"status": "ok"}})
            seen.append(len((await store.read())["cells"] or {}))
        return seen, store.pending

    seen, pending = asyncio.run(scenario())
    assert seen == [0, 0, 3, 3, 3, 6, 6]
    assert pending == 1
