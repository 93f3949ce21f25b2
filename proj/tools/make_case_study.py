#!/usr/bin/env python3
"""Writes fixtures/case_study.json: a 65-event single-user stream, the planner /
extractor / synthesizer responses that drive it, and the expected final state.

The expected state is computed here by a small stand-alone model of the memory
rules (FIFO window, create/boost/demote/forget, per-category capacity, the
mutation-triggered resynthesis), not by running the C++ engine.

    python3 tools/make_case_study.py [output_path]
"""
import json
import math
import sys
from pathlib import Path

USER = "u1773"
WINDOW = 15
B = 3
CAPACITY = 8
BOOST, DEMOTE = 0.1, 0.2
GAMMA = 5
T0 = 1_600_000_000

# ---- the reading history ----------------------------------------------------

BOOKS = [
    # interactions 1-30: theology discovery
    ("Mere Christianity", "Classic defence of the core of Christian belief", "C.S. Lewis"),
    ("The Cost of Discipleship", "Costly grace and obedience under pressure", "Dietrich Bonhoeffer"),
    ("Celebration of Discipline", "The classical disciplines of spiritual growth", "Richard Foster"),
    ("Life Together", "Christian community in practice", "Dietrich Bonhoeffer"),
    ("Renovation of the Heart", "Putting on the character of Christ", "Dallas Willard"),
    ("Letters and Papers from Prison", "Late theological letters", "Dietrich Bonhoeffer"),
    ("Institutes of the Christian Religion", "Systematic reformed doctrine", "John Calvin"),
    ("The Christian Faith", "A systematic theology for pilgrims on the way", "Michael Horton"),
    ("Putting Amazing Back into Grace", "An introduction to reformed theology", "Michael Horton"),
    ("Reason for God", "Belief in an age of skepticism", "Tim Keller"),
    ("The Case for Christ", "A journalist examines the evidence", "Lee Strobel"),
    ("Golden Booklet of the True Christian Life", "Short devotional from the Institutes", "John Calvin"),
    ("The Screwtape Letters", "Satirical letters on temptation", "C.S. Lewis"),
    ("The Great Divorce", "A dream of heaven and hell", "C.S. Lewis"),
    ("The Problem of Pain", "Why a good God allows suffering", "C.S. Lewis"),
    ("Church History in Plain Language", "Two thousand years of the church", "Bruce Shelley"),
    ("Prayer", "Experiencing awe and intimacy with God", "Tim Keller"),
    ("The Imitation of Christ", "Fifteenth-century devotional classic", "Thomas a Kempis"),
    ("Confessions", "Augustine's spiritual autobiography", "Augustine"),
    ("The Reformation", "A history of the sixteenth-century church", "Diarmaid MacCulloch"),
    ("Knowing God", "Classic study of the attributes of God", "J.I. Packer"),
    ("Ethics", "Unfinished theological ethics", "Dietrich Bonhoeffer"),
    ("Core Christianity", "Finding yourself in God's story", "Michael Horton"),
    ("Ordinary", "Sustainable faith in a radical restless world", "Michael Horton"),
    ("Calvin's Commentaries: Romans", "Verse-by-verse reformed exposition", "John Calvin"),
    ("Discipleship", "The call to follow", "Dietrich Bonhoeffer"),
    ("The Practice of the Presence of God", "Brother Lawrence on daily prayer", "Brother Lawrence"),
    ("Spiritual Formation", "Following the movements of the Spirit", "Henri Nouwen"),
    ("Gospel-Centered Discipleship", "Discipleship shaped by grace", "Jonathan Dodson"),
    ("Whitefield's Journals", "Revival preaching diaries", "George Whitefield"),
    # interactions 31-39: a detour into political biography, then back
    ("The Last Lion: Visions of Glory", "Churchill's early years", "William Manchester"),
    ("Team of Rivals", "Lincoln and his cabinet", "Doris Kearns Goodwin"),
    ("Churchill: Walking with Destiny", "Single-volume life of Churchill", "Andrew Roberts"),
    ("The Return of the Prodigal Son", "Meditation on Rembrandt's painting", "Henri Nouwen"),
    ("A Generous Orthodoxy", "Faith after modernity", "Brian McLaren"),
    ("The Wounded Healer", "Ministry in contemporary society", "Henri Nouwen"),
    ("The Strange Death of Europe", "Immigration, identity, Islam", "Douglas Murray"),
    ("Strangers Next Door", "Immigration and the church's mission", "J.D. Payne"),
    ("The Madness of Crowds", "Gender, race and identity", "Douglas Murray"),
    # interactions 40-51: back to reformed theology
    ("The Westminster Confession", "Reformed confession with commentary", "Westminster Assembly"),
    ("Calvin on the Christian Life", "Glorifying and enjoying God forever", "Michael Horton"),
    ("Reformed Dogmatics", "Bavinck's systematic theology", "Herman Bavinck"),
    ("John Calvin: Pilgrim and Pastor", "Biography of the reformer", "W. Robert Godfrey"),
    ("The Holiness of God", "The majesty of God", "R.C. Sproul"),
    ("What Is Reformed Theology?", "Understanding the basics", "R.C. Sproul"),
    ("Calvin's Institutes Abridged", "The Institutes for modern readers", "John Calvin"),
    ("The Doctrines of Grace", "Rediscovering evangelical gospel", "James Boice"),
    ("Chosen by God", "Predestination made plain", "R.C. Sproul"),
    ("God of Promise", "Introducing covenant theology", "Michael Horton"),
    ("Sacred Bond", "Covenant theology explored", "Michael Brown"),
    ("Introducing Covenant Theology", "From Adam to Christ", "Michael Horton"),
    # interactions 52-65: niche reformed theology
    ("Given for You", "Reclaiming Calvin's doctrine of the Lord's Supper", "Keith Mathison"),
    ("The Lord's Supper", "Remembering and proclaiming Christ", "Thomas Schreiner"),
    ("The Beatitudes", "An exposition of Matthew 5", "Thomas Watson"),
    ("Studies in the Sermon on the Mount", "Lloyd-Jones on the Beatitudes", "Martyn Lloyd-Jones"),
    ("The Good News We Almost Forgot", "Rediscovering the Heidelberg Catechism", "Kevin DeYoung"),
    ("Comfort for the Weary", "Heidelberg Catechism devotional", "Lyle Bierma"),
    ("Concise Theology", "Brief guide to Christian beliefs", "J.I. Packer"),
    ("A Quest for Godliness", "The Puritan vision of the Christian life", "J.I. Packer"),
    ("Faith Alone", "The evangelical doctrine of justification", "R.C. Sproul"),
    ("Everyone's a Theologian", "Introduction to systematic theology", "R.C. Sproul"),
    ("The Mystery of Providence", "Puritan reflection on God's care", "John Flavel"),
    ("Knowing Scripture", "Tools for reading the Bible", "R.C. Sproul"),
    ("Reformed Confessions Harmonized", "Side-by-side reformed confessions", "Joel Beeke"),
    ("The Pilgrim's Progress", "Allegory of the Christian journey", "John Bunyan"),
]
assert len(BOOKS) == 65


def event(i):
    title, desc, author = BOOKS[i - 1]
    return {
        "item_id": f"bk{i:03d}",
        "action": "read",
        "timestamp": T0 + i * 86400,
        "metadata": {"title": title, "description": desc, "author": author},
    }


# ---- the planner's rounds ------------------------------------------------------
# ("extract", [(category, statement, strength), ...]) creates; other tools name
# their target by statement and are translated to chunk ids below.

def ex(*creates):
    return ("extract", list(creates))


ROUNDS = {
    1: [ex(("topic", "Christianity", 0.8), ("author", "Dietrich Bonhoeffer", 0.9),
           ("topic", "spiritual formation", 0.7))],
    2: [ex(("topic", "reformed theology", 0.8))],
    3: [ex(("author", "Michael Horton", 0.8), ("author", "John Calvin", 0.8),
           ("topic", "apologetics", 0.6))],
    4: [ex(("author", "C.S. Lewis", 0.7))],
    5: [ex(("topic", "church history", 0.6), ("topic", "prayer", 0.5),
           ("topic", "devotional classics", 0.6))],
    6: [ex()],
    7: [ex()],
    8: [ex(), ex()],
    9: [ex(), ex()],
    10: [ex()],
    11: [ex(("author", "Churchill", 0.7), ("author", "Lincoln", 0.7))],
    12: [("demote", "Churchill"), ("demote", "Lincoln"),
         ex(("topic", "postmodern christianity", 0.6), ("author", "Henri Nouwen", 0.6))],
    13: [("demote", "Churchill"), ("demote", "Lincoln"),
         ex(("topic", "immigration", 0.6), ("author", "Douglas Murray", 0.5))],
    14: [("forget", "Churchill"), ("forget", "Lincoln"), ("boost", "reformed theology")],
    15: [("boost", "reformed theology"), ("boost", "John Calvin"), ex()],
    16: [("boost", "John Calvin"), ex(("topic", "covenant theology", 0.7))],
    17: [ex(("topic", "lord's supper", 0.6)), ("boost", "reformed theology")],
    18: [ex(("topic", "beatitudes", 0.6), ("topic", "Heidelberg Catechism", 0.7),
            ("author", "J.I. Packer", 0.7)),
         ("boost", "reformed theology"), ("boost", "Dietrich Bonhoeffer")],
    19: [ex(("author", "R.C. Sproul", 0.7)), ("boost", "reformed theology")],
    20: [ex(), ex()],
    21: [("boost", "Christianity"), ("boost", "reformed theology"), ex()],
}

PROFILES = [
    "This reader is drawn to Christian theology with a devotional bent. They value "
    "Dietrich Bonhoeffer's costly discipleship and the classical practices of spiritual "
    "formation, and they are beginning to explore reformed theology through Michael Horton "
    "and John Calvin. Apologetics interests them as a way to ground faith in reasons.",
    "A theology reader with a reformed centre of gravity. Bonhoeffer, Horton, Calvin and "
    "C.S. Lewis anchor their shelf, alongside church history, prayer and devotional "
    "classics. Lately they have picked up political biography (Churchill, Lincoln), which "
    "may be a passing detour rather than a lasting interest.",
    "The reader's core remains reformed and devotional theology. The biographies of "
    "Churchill and Lincoln did not develop into a pattern and have faded. New threads are "
    "postmodern readings of Christianity, Henri Nouwen's pastoral writing, and questions of "
    "immigration and culture via Douglas Murray.",
    "Reformed theology now dominates this reader's interests, with John Calvin the most "
    "trusted voice. Political biography has been dropped entirely. They read for doctrinal "
    "depth, historical rootedness and practical devotion, and respond well to classic "
    "reformed authors and confessional material.",
    "A committed reader of reformed theology: Calvin, Horton and Packer in particular, with "
    "growing attention to covenant theology, the Lord's Supper, the Beatitudes and the "
    "Heidelberg Catechism. Bonhoeffer remains a favourite. They prefer substantive, "
    "confessional works over popular or political titles.",
]


# ---- stand-alone model ---------------------------------------------------------

def snap(x):
    x = min(1.0, max(-1.0, x))
    # half away from zero, as in the engine
    v = math.floor(abs(x) * 1e6 + 0.5) / 1e6
    v = math.copysign(v, x)
    return 0.0 if v == 0 else v


def score(c):
    return c["evidence"] * int(math.floor(abs(c["strength"]) * 1e6 + 0.5))


def simulate():
    st = {"events": [], "prefs": [], "profile": {"text": "", "previous_text": "", "version": 0,
                                                  "synthesized_at": 0},
          "mutation_count": 0, "step": 0, "next_chunk_id": 1}
    tools = {k: 0 for k in ("extract", "merge", "boost", "demote", "forget", "synthesize")}
    plan_responses, extract_responses = [], []
    synth_seq = 0

    def find(statement):
        for c in st["prefs"]:
            if c["statement"] == statement:
                return c
        raise KeyError(statement)

    def mutate(c, delta):
        c["strength"] = snap(c["strength"] + delta)
        c["evidence"] += 1
        c["updated_at"] = st["step"]
        st["mutation_count"] += 1

    def enforce():
        by_cat = {}
        for c in st["prefs"]:
            by_cat.setdefault(c["category"], []).append(c)
        evict = set()
        for chunks in by_cat.values():
            if len(chunks) <= CAPACITY:
                continue
            ranked = sorted(chunks, key=lambda c: (-score(c), -c["updated_at"],
                                                   int(c["chunk_id"][1:])))
            evict |= {c["chunk_id"] for c in ranked[CAPACITY:]}
        st["prefs"] = [c for c in st["prefs"] if c["chunk_id"] not in evict]

    for i in range(1, 66):
        ev = event(i)
        st["step"] += 1
        st["events"].append(dict(event_id=f"e{st['step']}", user_id=USER, item_id=ev["item_id"],
                                 action=ev["action"], metadata=dict(sorted(ev["metadata"].items())),
                                 timestamp=ev["timestamp"], processed=False))
        if len(st["events"]) > WINDOW:
            st["events"].pop(0)
        pending = [e for e in st["events"] if not e["processed"]]
        if len(pending) < B:
            continue

        rnd = len(plan_responses) + 1
        actions = []
        for act in ROUNDS.get(rnd, []):
            if act[0] == "extract":
                creates = act[1]
                extract_responses.append(json.dumps(
                    [{"action": "create", "category": cat, "text": text, "strength": s}
                     for cat, text, s in creates]))
                for cat, text, s in creates:
                    cid = f"c{st['next_chunk_id']}"
                    st["next_chunk_id"] += 1
                    st["prefs"].append(dict(chunk_id=cid, category=cat, statement=text,
                                            strength=snap(s), evidence=1,
                                            created_at=st["step"], updated_at=st["step"]))
                    st["mutation_count"] += 1
                for e in pending:
                    e["processed"] = True
                enforce()
                actions.append({"tool": "extract"})
            else:
                tool, statement = act
                c = find(statement)
                actions.append({"tool": tool, "params": {"chunk_id": c["chunk_id"]}})
                if tool == "boost":
                    mutate(c, BOOST)
                elif tool == "demote":
                    mutate(c, -DEMOTE)
                else:
                    st["prefs"].remove(c)
                    st["mutation_count"] += 1
            tools[act[0]] += 1
        plan_responses.append(json.dumps({"actions": actions}))
        for e in pending:
            e["processed"] = True
        enforce()
        if st["mutation_count"] >= GAMMA:
            p = st["profile"]
            p["previous_text"], p["text"] = p["text"], PROFILES[synth_seq]
            p["version"] += 1
            p["synthesized_at"] = st["step"]
            st["mutation_count"] = 0
            synth_seq += 1
            tools["synthesize"] += 1

    assert len(plan_responses) == 21, len(plan_responses)
    assert synth_seq == len(PROFILES), synth_seq
    state = {
        "schema_version": 1,
        "user_id": USER,
        "events": st["events"],
        "preferences": st["prefs"],
        "profile": st["profile"],
        "mutation_count": st["mutation_count"],
        "step": st["step"],
        "next_chunk_id": st["next_chunk_id"],
    }
    return state, tools, plan_responses, extract_responses


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parent.parent / "fixtures" / "case_study.json"
    state, tools, plans, extracts = simulate()

    responses = []
    for n, r in enumerate(plans, 1):
        responses.append({"tag": "plan", "seq": n, "response": r})
    for n, r in enumerate(extracts, 1):
        responses.append({"tag": "extract", "seq": n, "response": r})
    for n, text in enumerate(PROFILES, 1):
        responses.append({"tag": "synthesize", "seq": n, "response": text})

    doc = {
        "description": "Theology reader with a brief detour into political biography: "
                       "extract, demote twice, forget, boost to saturation, periodic resynthesis.",
        "user_id": USER,
        "config": {"domain": "books", "categories": ["topic", "author"],
                   "mode": "evolving-agentic"},
        "events": [event(i) for i in range(1, 66)],
        "script": {"responses": responses},
        "expected": {"tool_counts": tools, "state": state},
    }
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2) + "\n")
    cats = sorted({c["category"] for c in state["preferences"]})
    total = sum(tools.values())
    print(f"wrote {out}: {len(state['preferences'])} chunks in {cats}, "
          f"profile v{state['profile']['version']}")
    print("tools:", ", ".join(f"{k} {v} ({100 * v / total:.0f}%)" for k, v in tools.items()))


if __name__ == "__main__":
    main()
