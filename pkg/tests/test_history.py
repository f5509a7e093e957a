import numpy as np
import pytest
from numpy.testing import assert_allclose

from stochmap.ctmc import RateMatrix, build_equal_rates
from stochmap.history import (
    AugmentedHistory,
    SubstitutionHistory,
    SummarySequence,
    as_augmented,
    drop_virtual_jumps,
    history_from_json,
    history_to_json,
    pack_history,
    read_history_file,
    read_tip_data,
    summarize,
    unpack_history,
    write_history_file,
    write_summary_csv,
    write_tip_data,
)
from stochmap.simulate import simulate_history
from stochmap.tree import parse_newick, simulate_yule_tree

# Worked 3-tip example (states 0/1/2, root in state 2): two tip branches of
# length 3.2 hang off an internal branch of length 4.8; the third tip branch
# has length 8.  The plain history has one real jump on each of branches 1
# and 3; the augmented version adds a virtual jump on branches 0 and 2.
WORKED_TREE = "((A:3.2,B:3.2):4.8,C:8.0);"


def worked_plain():
    labels = [(0,), (0, 1), (2,), (2, 0)]
    times = [(3.2,), (0.64, 2.56), (8.0,), (2.4, 2.4)]
    return SubstitutionHistory(labels, times, 2)


def worked_augmented():
    labels = [(0, 0), (0, 1), (2, 2), (2, 0)]
    times = [(1.6, 1.6), (0.64, 2.56), (7.0, 1.0), (2.4, 2.4)]
    return AugmentedHistory(labels, times, 2)


def test_worked_histories_validate():
    tree = parse_newick(WORKED_TREE)
    y = np.array([0, 1, 2])
    worked_plain().validate(tree, n_states=3, tip_data=y)
    worked_augmented().validate(tree, n_states=3, tip_data=y)


def test_drop_virtual_jumps_worked_example():
    dropped = drop_virtual_jumps(worked_augmented())
    assert dropped == worked_plain()
    # branch 0: (1.6, 1.6) merged to exactly 3.2
    assert dropped.times[0][0] == 1.6 + 1.6
    # branch 2: (7, 1) merged to exactly 8
    assert dropped.times[2][0] == 8.0


def test_drop_virtual_jumps_identity_when_no_self_transitions():
    aug = as_augmented(worked_plain())
    assert aug.total_virtual_jumps() == 0
    assert drop_virtual_jumps(aug) == worked_plain()


def test_drop_virtual_jumps_idempotent():
    once = drop_virtual_jumps(worked_augmented())
    assert drop_virtual_jumps(once) == once


def test_virtual_jump_positions():
    aug = worked_augmented()
    assert list(aug.virtual_jump_positions(0)) == [1]
    assert list(aug.virtual_jump_positions(1)) == []
    assert list(aug.virtual_jump_positions(2)) == [1]
    assert aug.total_virtual_jumps() == 2


def _random_augmented(tree, rate_matrix, rng):
    # simulate a plain history, then split segments into equal-label pieces
    plain, _ = simulate_history(tree, rate_matrix, rng)
    labels, times = [], []
    for lab, tim in zip(plain.labels, plain.times):
        new_lab, new_tim = [], []
        for state, t in zip(lab, tim):
            pieces = rng.integers(1, 4)
            cuts = np.sort(rng.uniform(0, t, size=pieces - 1))
            bounds = np.r_[0.0, cuts, t]
            for d in range(pieces):
                new_lab.append(state)
                new_tim.append(bounds[d + 1] - bounds[d])
        labels.append(new_lab)
        times.append(new_tim)
    return AugmentedHistory(labels, times, plain.root_state), plain


def test_drop_virtual_jumps_recovers_plain_history():
    rng = np.random.default_rng(21)
    tree = simulate_yule_tree(8, 1.0, rng)
    rm = build_equal_rates(3)
    for _ in range(20):
        aug, plain = _random_augmented(tree, rm, rng)
        dropped = drop_virtual_jumps(aug)
        assert dropped.root_state == plain.root_state
        for j in range(tree.n_branches):
            assert np.array_equal(dropped.labels[j], plain.labels[j])
            assert_allclose(dropped.times[j], plain.times[j], rtol=1e-13)


def test_dwell_times_unchanged_by_drop():
    rng = np.random.default_rng(22)
    tree = simulate_yule_tree(6, 1.0, rng)
    rm = build_equal_rates(4)
    aug, _ = _random_augmented(tree, rm, rng)
    before = aug.dwell_times(4)
    after = drop_virtual_jumps(aug).dwell_times(4)
    assert_allclose(before, after, rtol=1e-12)


# ----------------------------------------------------------------- validate


def test_validate_rejects_bad_branch_sum():
    h = worked_plain()
    tree = parse_newick(WORKED_TREE)
    bad = SubstitutionHistory(h.labels, [t.copy() for t in h.times], 2)
    bad.times[0][0] = 3.0
    with pytest.raises(ValueError, match="sum"):
        bad.validate(tree)


def test_validate_rejects_discontinuity():
    tree = parse_newick(WORKED_TREE)
    labels = [(0,), (1, 1), (2,), (2, 0)]  # branch 1 starts in wrong state
    times = [(3.2,), (0.64, 2.56), (8.0,), (2.4, 2.4)]
    with pytest.raises(ValueError, match="self transition"):
        SubstitutionHistory(labels, times, 2).validate(tree)
    labels = [(0,), (1, 2), (2,), (2, 0)]
    with pytest.raises(ValueError, match="parent"):
        SubstitutionHistory(labels, times, 2).validate(tree)


def test_validate_rejects_tip_mismatch():
    tree = parse_newick(WORKED_TREE)
    with pytest.raises(ValueError, match="tip"):
        worked_plain().validate(tree, tip_data=np.array([0, 1, 1]))


def test_validate_rejects_out_of_range_state():
    tree = parse_newick(WORKED_TREE)
    with pytest.raises(ValueError, match="range"):
        worked_plain().validate(tree, n_states=2)


def test_augmented_allows_self_transitions():
    tree = parse_newick(WORKED_TREE)
    worked_augmented().validate(tree, n_states=3)


# ---------------------------------------------------------------- summarize


def two_state_symmetric():
    return build_equal_rates(2)


def test_summarize_single_segment_log_density():
    h = SubstitutionHistory([(0,)], [(2.0,)], 0)
    sm = summarize(h, two_state_symmetric())
    assert_allclose(sm.log_density, np.log(0.5) - 2.0, atol=1e-12)
    assert_allclose(sm.dwell, [2.0, 0.0])
    assert sm.counts.sum() == 0


def test_summarize_one_jump_log_density():
    h = SubstitutionHistory([(0, 1)], [(1.0, 1.0)], 0)
    sm = summarize(h, two_state_symmetric())
    # log 0.5 - 1 + log(1) - 1
    assert_allclose(sm.log_density, np.log(0.5) - 2.0, atol=1e-12)
    assert sm.counts[0, 1] == 1 and sm.counts.sum() == 1


def test_summarize_worked_example_dwell():
    rm = build_equal_rates(3)
    sm = summarize(worked_plain(), rm)
    assert_allclose(sm.dwell, [6.24, 2.56, 10.4], atol=1e-12)
    assert_allclose(sm.dwell.sum(), 19.2, atol=1e-12)
    expect_counts = np.zeros((3, 3), dtype=int)
    expect_counts[0, 1] = 1
    expect_counts[2, 0] = 1
    assert np.array_equal(sm.counts, expect_counts)


def test_summarize_counts_are_ordered_pairs():
    h = SubstitutionHistory([(0, 1, 0), (0,)], [(1.0, 1.0, 1.0), (3.0,)], 0)
    q = np.array([[-2.0, 2.0], [0.5, -0.5]])
    rm = RateMatrix(q, pi=[0.2, 0.8])
    sm = summarize(h, rm)
    assert sm.counts[0, 1] == 1
    assert sm.counts[1, 0] == 1
    # log-density: log pi_0 + q_00*(1+1+3) + q_11*1 + log q_01 + log q_10
    expect = np.log(0.2) - 2.0 * 5.0 - 0.5 + np.log(2.0) + np.log(0.5)
    assert_allclose(sm.log_density, expect, atol=1e-12)


def test_summarize_virtual_jumps_do_not_count():
    rm = build_equal_rates(3)
    full = summarize(drop_virtual_jumps(worked_augmented()), rm)
    aug = summarize(worked_augmented(), rm)
    assert np.array_equal(full.counts, aug.counts)
    assert_allclose(full.dwell, aug.dwell, atol=1e-12)
    assert_allclose(full.log_density, aug.log_density, atol=1e-12)


def test_summarize_restriction():
    rm = build_equal_rates(3)
    sm = summarize(worked_plain(), rm, restrict_to=[2, 0])
    assert list(sm.states) == [2, 0]
    assert_allclose(sm.dwell, [10.4, 6.24], atol=1e-12)
    # restricted counts: jumps among {2, 0} only; 2->0 is the single one
    assert sm.counts[0, 1] == 1
    assert sm.counts.sum() == 1


def test_summarize_rejects_out_of_range():
    h = SubstitutionHistory([(0, 5)], [(1.0, 1.0)], 0)
    with pytest.raises(ValueError, match="range"):
        summarize(h, two_state_symmetric())


def test_dwell_sums_to_tree_length_on_random_histories():
    rng = np.random.default_rng(23)
    rm = build_equal_rates(4)
    for rep in range(5):
        tree = simulate_yule_tree(10, 1.0, rng)
        h, _ = simulate_history(tree, rm, rng)
        sm = summarize(h, rm)
        assert_allclose(sm.dwell.sum(), tree.branch_length.sum(), atol=1e-9)


# ------------------------------------------------------------------ file IO


def test_json_round_trip_exact():
    for h in (worked_plain(), worked_augmented()):
        again = history_from_json(history_to_json(h))
        assert type(again) is type(h)
        assert again == h


def test_history_file_round_trip(tmp_path):
    path = tmp_path / "history.json"
    write_history_file(worked_augmented(), path)
    assert read_history_file(path) == worked_augmented()


def test_summary_csv(tmp_path):
    rm = build_equal_rates(3)
    sms = [summarize(worked_plain(), rm, restrict_to=[0, 2]) for _ in range(3)]
    path = tmp_path / "summaries.csv"
    write_summary_csv(sms, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == ("dwell_0,dwell_2,count_0_0,count_0_2,count_2_0,"
                        "count_2_2,log_density")
    assert len(lines) == 4
    first = lines[1].split(",")
    assert float(first[0]) == sms[0].dwell[0]
    assert first[2:6] == ["0", "0", "1", "0"]
    assert float(first[6]) == sms[0].log_density


def test_summary_sequence_indexing_and_slicing():
    rng = np.random.default_rng(3)
    dwell = rng.random((5, 2))
    counts = rng.integers(0, 4, size=(5, 2, 2)).astype(np.float64)
    logp = rng.random(5)
    seq = SummarySequence((0, 2), dwell.copy(), counts.copy(), logp.copy())
    assert len(seq) == 5
    one = seq[3]
    assert list(one.states) == [0, 2]
    assert_allclose(one.dwell, dwell[3])
    assert one.log_density == logp[3]
    # slices stay array-backed so .dwell/.counts/.log_density survive
    sub = seq[1:4]
    assert isinstance(sub, SummarySequence)
    assert len(sub) == 3
    assert_allclose(sub.dwell, dwell[1:4])
    assert_allclose(sub.counts, counts[1:4])
    assert_allclose(sub.log_density, logp[1:4])
    assert sub[0].log_density == logp[1]
    with pytest.raises(ValueError):
        sub.dwell[0, 0] = 1.0  # views remain read-only


def test_summary_csv_rejects_mixed_states(tmp_path):
    rm = build_equal_rates(3)
    sms = [summarize(worked_plain(), rm, restrict_to=[0]),
           summarize(worked_plain(), rm, restrict_to=[1])]
    with pytest.raises(ValueError):
        write_summary_csv(sms, tmp_path / "bad.csv")


def test_tip_data_round_trip(tmp_path):
    tree = parse_newick(WORKED_TREE)
    y = np.array([2, 0, 1])
    path = tmp_path / "tips.csv"
    write_tip_data(y, tree, path)
    assert np.array_equal(read_tip_data(path, tree), y)


def test_tip_data_missing_tip(tmp_path):
    tree = parse_newick(WORKED_TREE)
    path = tmp_path / "tips.csv"
    path.write_text("A,0\nB,1\n")
    with pytest.raises(ValueError, match="C"):
        read_tip_data(path, tree)


# ------------------------------------------------------------- pack/unpack


def test_pack_unpack_round_trip():
    for h in (worked_plain(), worked_augmented()):
        labels, times, offsets = pack_history(h)
        assert offsets[0] == 0 and offsets[-1] == labels.size
        again = unpack_history(labels, times, offsets, h.root_state,
                               augmented=isinstance(h, AugmentedHistory))
        assert again == h


def test_pack_layout():
    labels, times, offsets = pack_history(worked_plain())
    assert list(offsets) == [0, 1, 3, 4, 6]
    assert list(labels) == [0, 0, 1, 2, 2, 0]
    assert_allclose(times, [3.2, 0.64, 2.56, 8.0, 2.4, 2.4])
