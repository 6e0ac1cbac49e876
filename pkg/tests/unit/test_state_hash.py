# test_state_hash — one list, one fingerprint

"""
Run with: pytest tests/unit/test_state_hash.py -v
"""

from src.cisrl.core.state_hash import compute_state_hash, normalize_states


def test_same_states_same_hash():
    a = [[0.5, 350.0], [0.25, 346.125]]
    assert compute_state_hash(a) == compute_state_hash([list(r) for r in a])


def test_order_matters():
    a = [[0.5, 350.0], [0.25, 346.0]]
    assert compute_state_hash(a) != compute_state_hash(a[::-1])


def test_one_ulp_changes_hash():
    assert compute_state_hash([[0.1, 350.0]]) != compute_state_hash([[0.1 + 2**-56, 350.0]])


def test_negative_zero_folds():
    assert compute_state_hash([[-0.0, 350.0]]) == compute_state_hash([[0.0, 350.0]])


def test_normalized_text():
    assert normalize_states([[0.5, 350.0]]) == "0.5 350"


def test_single_state_is_a_list_of_one():
    assert compute_state_hash([0.5, 350.0]) == compute_state_hash([[0.5, 350.0]])


def test_hex_digest():
    h = compute_state_hash([[0.5, 350.0]])
    assert len(h) == 64
    int(h, 16)
