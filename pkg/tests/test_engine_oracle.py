"""Cross-checks of the bitboard engine against the naive mailbox generator
plus long random-playout invariant fuzzing."""

import numpy as np
import pytest

from rbcnet import engine as eng
from rbcnet.engine import PASS, Move, initial_state, is_terminal, legal_moves, request_move
from rbcnet.naive_moves import naive_legal_moves


def popcount(bb):
    return bin(bb).count("1")


def test_oracle_equivalence_on_playout_positions(oracle_positions):
    for state in oracle_positions:
        fast = legal_moves(state)
        assert len(fast) == len(set(fast)), eng.to_fen(state)
        assert set(fast) == naive_legal_moves(state), eng.to_fen(state)


def test_oracle_equivalence_initial():
    assert set(legal_moves(initial_state())) == naive_legal_moves(initial_state())


@pytest.mark.slow
def test_playout_invariants_100k_steps():
    rng = np.random.default_rng(7)
    state = initial_state()
    steps = 0
    while steps < 100_000:
        if is_terminal(state) is not None:
            state = initial_state()
        before_total = popcount(state.occupied())
        roll = rng.random()
        if roll < 0.05:
            req = PASS
        elif roll < 0.20:
            req = Move(int(rng.integers(64)), int(rng.integers(64)))
            if req.from_sq == req.to_sq:
                req = PASS
        else:
            moves = legal_moves(state)
            req = moves[int(rng.integers(len(moves)))]
        prev = state
        state, outcome = request_move(state, req)
        steps += 1

        if state.result is None:
            eng.validate_state(state)
        union = 0
        for bb in state.pieces:
            assert not union & bb, "occupancy sets overlap"
            union |= bb
        for color in (eng.WHITE, eng.BLACK):
            assert popcount(state.piece_bb(color, eng.KING)) <= 1
        after_total = popcount(state.occupied())
        if outcome.capture_square is not None:
            assert after_total == before_total - 1
        else:
            assert after_total == before_total
        if outcome.was_illegal:
            assert state.pieces == prev.pieces
            assert state.side_to_move != prev.side_to_move


def test_playouts_terminate_within_turn_cap():
    rng = np.random.default_rng(99)
    for _ in range(20):
        state = initial_state()
        plies = 0
        while is_terminal(state) is None:
            moves = legal_moves(state)
            state, _ = request_move(state, moves[int(rng.integers(len(moves)))])
            plies += 1
            assert plies <= 2 * eng.TURN_CAP
        assert is_terminal(state).reason in ("king_captured", "turn_cap_draw")


def test_truncation_paths_match_oracle_semantics(oracle_positions):
    """Any non-illegal outcome must itself be a legal move of the position."""
    rng = np.random.default_rng(3)
    for state in oracle_positions[:200]:
        req = Move(int(rng.integers(64)), int(rng.integers(64)))
        if req.from_sq == req.to_sq:
            continue
        new_state, outcome = request_move(state, req)
        if outcome.was_illegal:
            assert state.pieces == new_state.pieces
        elif not outcome.taken_move.is_pass:
            taken = outcome.taken_move
            legal = naive_legal_moves(state)
            if taken.promotion is not None and taken.promotion == eng.QUEEN:
                assert taken in legal or Move(taken.from_sq, taken.to_sq) in legal
            else:
                assert taken in legal
