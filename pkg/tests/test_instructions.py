"""Prompting, response parsing, curation, and epoch pairing.

The golden prompt files pin the exact prompt bytes; any template drift
fails loudly. Parser fixtures cover the response shapes observed from
real chat models: clean lists, surrounding prose, bullets, ellipses.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from deskvla.instructions import (
    CandidateSet,
    CuratedSet,
    InstructionStore,
    build_prompt,
    canonical_instruction,
    keyframe_indices,
    pair,
    parse_candidates,
    render_candidates,
    utc_timestamp,
)
from deskvla.trajectories import synthesize

GOLDEN = Path(__file__).parent / "golden"

FIVE_LINES = """No. 1 Move the red block to the upper left corner.
No. 2 In order to tidy up, the robot should relocate the item.
No. 3 If the task is cleanup, carry the block to the corner.
No. 4 Grasp the target and set it down at the corner zone.
No. 5 The goal is to have the block resting at the corner."""


def make_candidates(tid="traj-000"):
    return parse_candidates(FIVE_LINES, tid)


def test_keyframe_indices():
    assert keyframe_indices(3) == (0, 1, 2)
    assert keyframe_indices(4) == (0, 1, 3)
    assert keyframe_indices(25) == (0, 12, 24)
    assert keyframe_indices(9) == (0, 4, 8)


def test_prompt_matches_golden():
    traj = synthesize(1, steps=9, seed=5)[0]
    bundle = build_prompt(traj)
    assert bundle.system_message == (GOLDEN / "prompt_system.txt").read_text()
    assert bundle.user_message == (GOLDEN / "prompt_user.txt").read_text()
    assert bundle.keyframes == (
        (0, "traj-000/imgs/0.png"),
        (4, "traj-000/imgs/4.png"),
        (8, "traj-000/imgs/8.png"),
    )


def test_prompt_core_phrases():
    traj = synthesize(1, steps=25, seed=0)[0]
    bundle = build_prompt(traj)
    user = bundle.user_message
    assert "Synthesize exactly 5 distinct natural language instructions" in user
    assert 'starting with "No. [Number]"' in user
    assert user.count("{Image") == 3
    assert "Imperative, Goal-oriented, and Conditional" in user
    assert "linguistic expert" in bundle.system_message


def test_prompt_uses_keyframe_references():
    traj = synthesize(1, steps=25, seed=1)[0]
    bundle = build_prompt(traj)
    for k in (0, 12, 24):
        assert f"{traj.id}/imgs/{k}.png" in bundle.user_message


def test_prompt_rejects_short_trajectory():
    traj = synthesize(1, steps=3, seed=0)[0]
    traj.frames = traj.frames[:2]
    with pytest.raises(ValueError, match="trajectory too short"):
        build_prompt(traj)


def test_parse_well_formed():
    cs = make_candidates()
    assert len(cs.texts) == 5
    assert cs.texts[0] == "Move the red block to the upper left corner."
    assert cs.texts[4] == "The goal is to have the block resting at the corner."


def test_parse_ignores_surrounding_prose():
    raw = (
        "Scene Analysis: a robot arm approaches a red block on a desk.\n"
        "The objective appears to be transport.\n\n" + FIVE_LINES + "\n\n"
        "Let me know if you need more variations!"
    )
    cs = parse_candidates(raw, "t")
    assert cs.texts == make_candidates("t").texts


def test_parse_lenient_prefix_variants():
    raw = (
        "No.1 First instruction here.\n"
        "no. 2: Second instruction here.\n"
        "- No. 3 Third instruction here.\n"
        "* No.4: Fourth instruction here.\n"
        "  No. 5   Fifth instruction here.\n"
    )
    cs = parse_candidates(raw, "t")
    assert cs.texts == [
        "First instruction here.",
        "Second instruction here.",
        "Third instruction here.",
        "Fourth instruction here.",
        "Fifth instruction here.",
    ]


def test_parse_strips_trailing_ellipsis():
    raw = FIVE_LINES.replace(
        "No. 5 The goal is to have the block resting at the corner.",
        "No. 5 The goal is to have the block resting at the corner...",
    )
    cs = parse_candidates(raw, "t")
    assert cs.texts[4] == "The goal is to have the block resting at the corner"
    raw = raw.replace("corner...", "corner…")
    cs = parse_candidates(raw, "t")
    assert cs.texts[4] == "The goal is to have the block resting at the corner"


def test_parse_too_few_lines():
    raw = "No. 1 Pick up the cup and move it to the left.\nNo. 2 Transport the cup."
    with pytest.raises(ValueError, match=r"malformed response \(found 2\)"):
        parse_candidates(raw, "t")


def test_parse_empty_response():
    with pytest.raises(ValueError, match=r"malformed response \(found 0\)"):
        parse_candidates("Sorry, I cannot help with that.", "t")


def test_parse_duplicate_index():
    raw = FIVE_LINES + "\nNo. 3 A sixth line reusing an index."
    with pytest.raises(ValueError, match="duplicate instruction index 3"):
        parse_candidates(raw, "t")


def test_parse_out_of_range_index_ignored():
    raw = "No. 0 Should be skipped.\n" + FIVE_LINES + "\nNo. 6 Also skipped."
    cs = parse_candidates(raw, "t")
    assert len(cs.texts) == 5
    assert all("skipped" not in t.lower() for t in cs.texts)


def test_parse_render_identity():
    cs = make_candidates()
    again = parse_candidates(render_candidates(cs), cs.trajectory_id)
    assert again == cs


def test_candidate_set_validation():
    with pytest.raises(ValueError, match="indices 1..5"):
        CandidateSet(trajectory_id="t", candidates=((1, "a"), (2, "b")))
    with pytest.raises(ValueError, match="indices 1..5"):
        CandidateSet(
            trajectory_id="t",
            candidates=((1, "a"), (1, "b"), (3, "c"), (4, "d"), (5, "e")),
        )
    with pytest.raises(ValueError, match="non-empty"):
        CandidateSet(
            trajectory_id="t",
            candidates=((1, "a"), (2, " "), (3, "c"), (4, "d"), (5, "e")),
        )


def test_candidate_payload_round_trip():
    cs = make_candidates()
    assert CandidateSet.from_payload(cs.to_payload()) == cs


def test_curated_set_validation():
    with pytest.raises(ValueError, match="between 1 and 5"):
        CuratedSet(trajectory_id="t", selected=(), curator="u", timestamp="x")
    with pytest.raises(ValueError, match="between 1 and 5"):
        CuratedSet(trajectory_id="t", selected=tuple("abcdef"), curator="u", timestamp="x")
    one = CuratedSet(trajectory_id="t", selected=("keep this",), curator="u", timestamp="x")
    assert CuratedSet.from_payload(one.to_payload()) == one


def test_canonical_instruction():
    text = canonical_instruction({"object": "red block", "goal": "center"})
    assert text == "move the red block to the center."


def test_pair_requires_curation():
    with pytest.raises(ValueError, match="trajectory uncurated"):
        pair({}, "traj-000", epoch=0, seed=0)


def test_pair_is_deterministic():
    cs = make_candidates()
    curated = {
        "traj-000": CuratedSet(
            trajectory_id="traj-000", selected=tuple(cs.texts), curator="u", timestamp="x"
        )
    }
    draws = [pair(curated, "traj-000", epoch=e, seed=42) for e in range(20)]
    again = [pair(curated, "traj-000", epoch=e, seed=42) for e in range(20)]
    assert draws == again
    assert len(set(draws)) > 1  # epochs actually vary the instruction
    other_seed = [pair(curated, "traj-000", epoch=e, seed=43) for e in range(20)]
    assert other_seed != draws


def test_pair_draws_are_uniform():
    # Chi-square over 5 categories: 4 dof, 5-sigma-ish cutoff ~ 40. Draws
    # vary across epochs and trajectory ids; both feed the hash.
    cs = make_candidates()
    selected = tuple(cs.texts)
    counts = {t: 0 for t in selected}
    n_ids, n_epochs = 40, 50
    curated = {
        f"traj-{i:03d}": CuratedSet(
            trajectory_id=f"traj-{i:03d}", selected=selected, curator="u", timestamp="x"
        )
        for i in range(n_ids)
    }
    for tid in curated:
        for epoch in range(n_epochs):
            counts[pair(curated, tid, epoch=epoch, seed=7)] += 1
    total = n_ids * n_epochs
    expected = total / len(selected)
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 40.0, f"chi2={chi2:.1f} counts={counts}"


def test_pair_single_selection_is_constant():
    curated = {
        "t": CuratedSet(trajectory_id="t", selected=("only one",), curator="u", timestamp="x")
    }
    assert all(pair(curated, "t", epoch=e, seed=0) == "only one" for e in range(10))


def test_store_round_trip(tmp_path):
    store = InstructionStore(tmp_path)
    cs = make_candidates("traj-007")
    store.save_candidates(cs)
    assert store.load_candidates("traj-007") == cs
    assert store.candidate_ids() == ["traj-007"]
    assert not store.is_curated("traj-007")

    curated = CuratedSet(
        trajectory_id="traj-007",
        selected=(cs.texts[0], cs.texts[2]),
        curator="tester",
        timestamp=utc_timestamp(),
    )
    store.save_curation(curated)
    assert store.is_curated("traj-007")
    assert store.load_curation("traj-007") == curated
    assert store.curation_ids() == ["traj-007"]
    assert store.all_curations() == {"traj-007": curated}


def test_store_missing_keys(tmp_path):
    store = InstructionStore(tmp_path)
    with pytest.raises(KeyError, match="no candidates"):
        store.load_candidates("nope")
    with pytest.raises(KeyError, match="uncurated"):
        store.load_curation("nope")


def test_store_rejects_stray_selection(tmp_path):
    store = InstructionStore(tmp_path)
    cs = make_candidates("traj-001")
    store.save_candidates(cs)
    bad = CuratedSet(
        trajectory_id="traj-001",
        selected=("this text was never a candidate",),
        curator="tester",
        timestamp="x",
    )
    with pytest.raises(ValueError, match="not among candidates"):
        store.save_curation(bad)


def test_store_resubmission_replaces(tmp_path):
    store = InstructionStore(tmp_path)
    cs = make_candidates("traj-002")
    store.save_candidates(cs)
    first = CuratedSet("traj-002", (cs.texts[0],), "a", "t1")
    second = CuratedSet("traj-002", (cs.texts[1], cs.texts[3]), "b", "t2")
    store.save_curation(first)
    store.save_curation(second)
    assert store.load_curation("traj-002") == second
    assert store.curation_ids() == ["traj-002"]


def test_store_writes_are_atomic(tmp_path):
    store = InstructionStore(tmp_path)
    store.save_candidates(make_candidates("traj-003"))
    leftovers = list(tmp_path.rglob("*.tmp"))
    assert leftovers == []


def test_pair_hash_layout_is_stable():
    # Freeze the exact draw for one known input so the hash recipe cannot
    # change silently; the value was computed once from sha256 directly.
    import hashlib

    selected = ("a", "b", "c", "d", "e")
    curated = {"traj-042": CuratedSet("traj-042", selected, "u", "x")}
    digest = hashlib.sha256(b"13|4|traj-042").digest()
    expected = selected[int.from_bytes(digest[:8], "big") % 5]
    assert pair(curated, "traj-042", epoch=4, seed=13) == expected
