"""Python access to the tiered preference memory core."""

import json as _json

try:
    from . import _tiermem as _core
except ImportError:  # in-tree build: the extension sits next to the package
    import _tiermem as _core

MemoryState = _core.MemoryState
PreferenceChunk = _core.PreferenceChunk
Profile = _core.Profile
LifecycleConfig = _core.LifecycleConfig
TiermemError = _core.TiermemError

normalize_strength = _core.normalize_strength
capacity_score = _core.capacity_score
boost = _core.boost
demote = _core.demote
merge = _core.merge
forget = _core.forget
enforce_capacity = _core.enforce_capacity
hit_rate_at_k = _core.hit_rate_at_k
ndcg_at_k = _core.ndcg_at_k
estimate_cost = _core.estimate_cost
compute_stats = _core.compute_stats
replay = _core.replay
stats = _core.stats


def run(config):
    """Run an evaluation from a flat config dict. Returns (exit_code, stdout, stderr)."""
    return _core.run(_json.dumps(config))


__all__ = [n for n in dir() if not n.startswith("_")]
