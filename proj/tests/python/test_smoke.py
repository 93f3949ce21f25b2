import json
import math
import os
import pathlib

import pytest

import tiermem

SOURCE = pathlib.Path(os.environ.get("TIERMEM_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
CASE_STUDY = SOURCE / "fixtures" / "case_study.json"


def state_with(chunks):
    doc = json.loads(tiermem.MemoryState().to_json())
    doc["user_id"] = "u"
    doc["next_chunk_id"] = len(chunks) + 1
    doc.update({
        "preferences": [
            {
                "chunk_id": cid,
                "category": cat,
                "statement": text,
                "strength": s,
                "evidence": ev,
                "created_at": 0,
                "updated_at": 0,
            }
            for cid, cat, text, s, ev in chunks
        ],
    })
    return tiermem.MemoryState.from_json(json.dumps(doc))


def test_metrics_match_closed_form():
    assert tiermem.hit_rate_at_k(1, 1) == 1.0
    assert tiermem.hit_rate_at_k(6, 5) == 0.0
    assert tiermem.ndcg_at_k(2, 5) == pytest.approx(1 / math.log2(3), abs=1e-12)
    assert tiermem.ndcg_at_k(3, 5) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(tiermem.TiermemError):
        tiermem.hit_rate_at_k(0, 5)


def test_cost_and_stats():
    assert tiermem.estimate_cost(30_000_000, 5_100_000) == pytest.approx(21.75, abs=0.005)
    assert tiermem.estimate_cost(0, 0) == 0.0
    s = tiermem.compute_stats(100, 8334, 8935)
    assert "%.3f" % (s["density"] * 100) == "1.072"
    assert "%.1f" % s["avg_per_user"] == "89.3"


def test_lifecycle_round_trip():
    st = state_with([("c1", "topic", "Grace", 0.5, 1), ("c2", "topic", "Law", 0.4, 3)])
    tiermem.boost(st, "c1")
    assert st.chunk("c1").strength == pytest.approx(0.6, abs=1e-9)
    assert st.chunk("c1").evidence == 2
    tiermem.demote(st, "c2")
    assert st.chunk("c2").strength == pytest.approx(0.2, abs=1e-9)
    assert st.mutation_count == 2
    merged = tiermem.merge(st, ["c1", "c2"], "Grace and law")
    # evidence-weighted mean: (0.6*2 + 0.2*4) / 6
    assert st.chunk(merged).strength == pytest.approx(2.0 / 6, abs=1e-6)
    assert st.chunk(merged).evidence == 6
    assert tiermem.forget(st, merged)
    assert st.preferences == []
    with pytest.raises(tiermem.TiermemError, match="not_found"):
        tiermem.boost(st, "c1")
    again = tiermem.MemoryState.from_json(st.to_json())
    assert again == st


def test_capacity_keeps_top_k():
    cfg = tiermem.LifecycleConfig()
    chunks = [("c%d" % i, "genre", "s%d" % i, 0.1 * i, 1) for i in range(1, 10)]
    st = state_with(chunks)
    evicted = tiermem.enforce_capacity(st, cfg)
    assert [c.chunk_id for c in evicted] == ["c1"]
    assert len(st.preferences) == cfg.capacity_per_category


def test_case_study_replay():
    r = tiermem.replay(str(CASE_STUDY))
    assert r["passed"], r["diffs"]
    assert r["state"].profile.version == 5
    assert len(r["state"].preferences) == 16


def test_config_error_is_named(tmp_path):
    code, out, err = tiermem.run({"colour": "red"})
    assert code == 1
    assert "colour" in err
