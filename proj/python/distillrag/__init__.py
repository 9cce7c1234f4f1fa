"""Python bindings for the distillrag medication-consultation core."""

import json as _json
import os as _os

from . import _core
from .errors import DistillragError

__all__ = [
    "DistillragError",
    "Index",
    "Service",
    "build_distill_prompt",
    "elo_update",
    "embed",
    "evaluate",
    "expected_score",
    "format_tool_call",
    "parse_tool_call",
    "seeded_permutation",
    "try_parse_tool_call",
]

format_tool_call = _core.format_tool_call
parse_tool_call = _core.parse_tool_call
try_parse_tool_call = _core.try_parse_tool_call
build_distill_prompt = _core.build_distill_prompt
expected_score = _core.expected_score
elo_update = _core.elo_update
seeded_permutation = _core.seeded_permutation

_LOCAL_HASH = {"kind": "local-hash", "dim": 256}


def embed(text, embedder=None):
    """Unit-norm embedding of ``text`` as a list of floats."""
    return _core.embed(text, _json.dumps(embedder or _LOCAL_HASH))


class Index:
    """Entity-oriented medicine index.

    ``database`` is a path to a database JSON file or an already decoded list
    of records. ``embedder`` is an embedder config dict.
    """

    def __init__(self, database, embedder=None, cache_dir=None):
        if isinstance(database, (str, _os.PathLike)):
            with open(database, encoding="utf-8") as f:
                text = f.read()
        else:
            text = _json.dumps(database)
        self._native = _core.Index(text, _json.dumps(embedder or _LOCAL_HASH),
                                   None if cache_dir is None else _os.fspath(cache_dir))

    def search(self, query, granularity="fine", num=5, mode="hierarchical", fanout=10):
        return _json.loads(self._native.search(query, granularity, num, mode, fanout))

    @property
    def stats(self):
        entities, items = self._native.stats
        return {"entities": entities, "items": items}

    @property
    def loaded_from_cache(self):
        return self._native.loaded_from_cache


def evaluate(index, dataset_path, query_mode="distill", distiller_config=None, pipeline=None,
             nums=(1, 5, 10, 50), fine_rule="any", workers=4):
    """Hit-ratio report for a dialogue dataset, as a dict."""
    return _json.loads(_core.evaluate(
        index._native, _os.fspath(dataset_path), query_mode,
        None if distiller_config is None else _os.fspath(distiller_config),
        "" if pipeline is None else _json.dumps(pipeline), list(nums), fine_rule, workers))


class Service:
    """In-process consultation service built from a service config file."""

    def __init__(self, config_path):
        self._native = _core.Service(_os.fspath(config_path))

    def create_session(self):
        return self._native.create_session()

    def post_message(self, session_id, question):
        return _json.loads(self._native.post_message(session_id, question))

    def get_session(self, session_id):
        raw = self._native.get_session(session_id)
        return None if raw is None else _json.loads(raw)

    def search(self, query, granularity="fine", num=5):
        return _json.loads(self._native.search(query, granularity, num))

    def ingest(self, database):
        text = database if isinstance(database, str) else _json.dumps(database)
        entities, items = self._native.ingest(text)
        return {"entities": entities, "items": items}

    def health(self):
        return _json.loads(self._native.health())

    def start(self):
        """Serves REST on a background thread; returns the bound port."""
        return self._native.start()

    def stop(self):
        self._native.stop()
