import numpy as np
import pytest

from rbcnet import engine as eng


def make_state(pieces, side="w", castling="", ep=None, fullmove=1):
    """Build a GroundState from {square_name: piece_char} (FEN piece letters)."""
    bbs = [0] * 12
    for sq_name, ch in pieces.items():
        color = eng.WHITE if ch.isupper() else eng.BLACK
        kind = eng.PIECE_CHARS.index(ch.upper())
        bbs[color * 6 + kind] |= 1 << eng.parse_square(sq_name)
    rights = 0
    for ch, bit in (("K", eng.CASTLE_WK), ("Q", eng.CASTLE_WQ),
                    ("k", eng.CASTLE_BK), ("q", eng.CASTLE_BQ)):
        if ch in castling:
            rights |= bit
    return eng.GroundState(
        pieces=tuple(bbs),
        side_to_move=eng.WHITE if side == "w" else eng.BLACK,
        castling=rights,
        en_passant=None if ep is None else eng.parse_square(ep),
        fullmove=fullmove,
        result=eng.GameResult(winner=None, reason="turn_cap_draw") if _kings_missing(bbs) else None,
    )


def _kings_missing(bbs):
    return not bbs[eng.WHITE * 6 + eng.KING] or not bbs[eng.BLACK * 6 + eng.KING]


def random_playout_states(seed, max_states, junk_rate=0.0, turn_cap=eng.TURN_CAP):
    """Yield states visited by seeded random play from the initial position.

    With junk_rate > 0 a fraction of requests are arbitrary square pairs,
    exercising the illegal/truncation paths.
    """
    rng = np.random.default_rng(seed)
    state = eng.initial_state()
    produced = 0
    while produced < max_states:
        if eng.is_terminal(state, turn_cap) is not None:
            state = eng.initial_state()
        if junk_rate and rng.random() < junk_rate:
            req = eng.Move(int(rng.integers(64)), int(rng.integers(64)))
            if req.from_sq == req.to_sq:
                req = eng.PASS
        else:
            moves = eng.legal_moves(state)
            req = moves[int(rng.integers(len(moves)))]
        state, _ = eng.request_move(state, req)
        if state.result is None:
            yield state
            produced += 1


@pytest.fixture(scope="session")
def oracle_positions():
    """1,000 playout positions shared by the oracle-equivalence tests."""
    return list(random_playout_states(seed=20240817, max_states=1000, junk_rate=0.1))
