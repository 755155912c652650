"""Move/sense index codecs and the 90-plane frame / 1800-channel stack layout."""

import numpy as np
import pytest

from rbcnet import engine as eng
from rbcnet import observe as obs
from rbcnet.engine import Move, parse_square
from rbcnet.observe import (
    HISTORY_LENGTH,
    MOVE_INDEX_COUNT,
    PASS_INDEX,
    PRE_MOVE,
    PRE_SENSE,
    EncodingError,
    EventOrderError,
    ObservationHistory,
    decode_move_index,
    encode_frame,
    encode_move_index,
)


def mv(text):
    return Move.from_uci(text)


class TestMoveCodec:
    def test_e2e4_is_76(self):
        assert encode_move_index(mv("e2e4")) == 76

    def test_g1f3_is_4038(self):
        assert encode_move_index(mv("g1f3")) == 4038

    def test_pass_is_last_index(self):
        assert encode_move_index(Move.make_pass()) == PASS_INDEX == 4672

    def test_decode_pass(self):
        assert decode_move_index(PASS_INDEX).is_pass

    def test_decode_76(self):
        assert decode_move_index(76) == mv("e2e4")

    def test_underpromotion_planes(self):
        # White push-promotions to knight/bishop/rook occupy planes 64/67/70.
        assert encode_move_index(mv("e7e8n")) // 64 == 65
        assert encode_move_index(mv("e7e8b")) // 64 == 68
        assert encode_move_index(mv("e7e8r")) // 64 == 71
        # Captures left/right from the mover's viewpoint.
        assert encode_move_index(mv("e7d8n")) // 64 == 64
        assert encode_move_index(mv("e7f8n")) // 64 == 66
        # Black's left is the h-side file.
        assert encode_move_index(mv("e2f1n")) // 64 == 64
        assert encode_move_index(mv("e2d1n")) // 64 == 66

    def test_queen_promotion_uses_queen_plane(self):
        index = encode_move_index(mv("e7e8q"))
        assert index // 64 < 56
        decoded = decode_move_index(index, color=eng.WHITE,
                                    pawn_squares=1 << parse_square("e7"))
        assert decoded == mv("e7e8q")

    def test_black_queen_promotion_roundtrip(self):
        index = encode_move_index(mv("e2e1q"))
        decoded = decode_move_index(index, color=eng.BLACK,
                                    pawn_squares=1 << parse_square("e2"))
        assert decoded == mv("e2e1q")

    def test_non_encodable_moves_raise(self):
        with pytest.raises(EncodingError):
            encode_move_index(Move(12, 12))
        with pytest.raises(EncodingError):
            encode_move_index(Move(0, 11))  # a1->d2, (3, 1) is neither a line nor a knight jump
        with pytest.raises(EncodingError):
            decode_move_index(MOVE_INDEX_COUNT)

    def test_roundtrip_over_playout_positions(self, oracle_positions):
        for state in oracle_positions:
            color = state.side_to_move
            pawns = state.piece_bb(color, eng.PAWN)
            moves = eng.legal_moves(state)
            indices = [encode_move_index(m) for m in moves]
            assert len(set(indices)) == len(moves), "encode not injective on legal set"
            for move, index in zip(moves, indices):
                assert 0 <= index < MOVE_INDEX_COUNT
                assert decode_move_index(index, color, pawns) == move


def fresh_history(color=eng.WHITE):
    return ObservationHistory(color)


def sense_at(state, center):
    return center, eng.apply_sense(state, center).revealed


class TestFrames:
    def test_first_white_partial_frame(self):
        hist = fresh_history()
        hist.begin_turn(None)
        stack = hist.encode_stack(PRE_SENSE)
        frame = stack[-90:]
        counts = [int(frame[obs.PLANE_OWN_BASE + k].sum()) for k in range(6)]
        assert counts == [8, 2, 2, 2, 1, 1]
        assert frame[obs.PLANE_COLOR].min() == 1
        others = [p for p in range(90)
                  if not obs.PLANE_OWN_BASE <= p < obs.PLANE_OWN_BASE + 6 and p != obs.PLANE_COLOR]
        assert frame[others].sum() == 0
        assert stack[:-90].sum() == 0

    def test_frame_after_illegal_move(self):
        state = eng.initial_state()
        hist = fresh_history()
        hist.begin_turn(None)
        hist.record_sense(*sense_at(state, parse_square("e5")))
        hist.record_move(None, None, True)
        frame = encode_frame(hist.frames[-1])
        assert frame[obs.PLANE_ILLEGAL].min() == 1
        assert frame[obs.PLANE_MOVE_BASE:obs.PLANE_MY_CAPTURE].sum() == 0

    def test_frame_after_capture_move(self):
        state = eng.from_fen("4k3/8/8/8/8/5p2/8/3QK3 w - - 0 1")
        hist = fresh_history()
        # Own pieces are event-derived, so fake a white history holding Q+K only.
        hist._own = [0, 0, 0, 0, 1 << parse_square("d1"), 1 << parse_square("e1")]
        hist.begin_turn(None)
        hist.record_sense(*sense_at(state, parse_square("e4")))
        _, outcome = eng.request_move(state, mv("d1f3"))
        hist.record_move(outcome.taken_move, outcome.capture_square, outcome.was_illegal)
        frame = encode_frame(hist.frames[-1])
        move_planes = frame[obs.PLANE_MOVE_BASE:obs.PLANE_MY_CAPTURE]
        assert move_planes.sum() == 1
        f3 = parse_square("f3")
        assert frame[obs.PLANE_MY_CAPTURE].sum() == 1
        assert frame[obs.PLANE_MY_CAPTURE, f3 >> 3, f3 & 7] == 1

    def test_pass_leaves_move_planes_empty(self):
        state = eng.initial_state()
        hist = fresh_history()
        hist.begin_turn(None)
        hist.record_sense(*sense_at(state, parse_square("e5")))
        hist.record_move(eng.PASS, None, False)
        frame = encode_frame(hist.frames[-1])
        assert frame[obs.PLANE_MOVE_BASE:obs.PLANE_MY_CAPTURE].sum() == 0
        assert frame[obs.PLANE_ILLEGAL].sum() == 0

    def test_sense_planes_subset_of_window(self):
        state = eng.initial_state()
        hist = fresh_history()
        hist.begin_turn(None)
        hist.record_sense(*sense_at(state, parse_square("f7")))
        stack = hist.encode_stack(PRE_MOVE)
        frame = stack[-90:]
        window = frame[obs.PLANE_SENSE_WINDOW]
        assert window.sum() == 9
        for k in range(6):
            piece_plane = frame[obs.PLANE_SENSE_BASE + k]
            assert np.all(piece_plane <= window)
        # f7's window covers six black pawns and two back-rank pieces.
        assert frame[obs.PLANE_SENSE_BASE + eng.PAWN].sum() == 3
        assert frame[obs.PLANE_SENSE_BASE + eng.KING].sum() == 1

    def test_stage_visibility(self):
        state = eng.initial_state()
        hist = fresh_history()
        hist.begin_turn(None)
        pre_sense = hist.encode_stack(PRE_SENSE)
        assert pre_sense[-90:][obs.PLANE_SENSE_WINDOW].sum() == 0
        hist.record_sense(*sense_at(state, parse_square("e5")))
        pre_move = hist.encode_stack(PRE_MOVE)
        assert pre_move[-90:][obs.PLANE_SENSE_WINDOW].sum() == 9
        move_planes = pre_move[-90:][obs.PLANE_MOVE_BASE:obs.PLANE_MY_CAPTURE]
        assert move_planes.sum() == 0


class TestHistory:
    def test_stack_shape_always_1800(self):
        hist = fresh_history()
        hist.begin_turn(None)
        assert hist.encode_stack(PRE_SENSE).shape == (1800, 8, 8)

    def test_ring_buffer_evicts_oldest(self):
        hist = fresh_history()
        hist._own = [0, 1 << 1, 0, 0, 0, 1 << 4]
        rng = np.random.default_rng(5)
        sq = 1
        # Bounce a lone knight around for 25 of "our" turns.
        for turn in range(25):
            hist.begin_turn(None)
            hist.record_sense(int(rng.integers(64)), [])
            targets = [t for t in range(64) if (eng.KNIGHT_ATTACKS[sq] >> t) & 1 and t != 4]
            to_sq = targets[int(rng.integers(len(targets)))]
            hist.record_move(Move(sq, to_sq), None, False)
            sq = to_sq
        assert len(hist.frames) == HISTORY_LENGTH
        assert hist.turn_no == 25
        # The newest completed frame must show the knight's final square.
        assert hist.frames[-1].my_last_move.to_sq == sq

    def test_event_order_enforced(self):
        hist = fresh_history()
        with pytest.raises(EventOrderError):
            hist.record_sense(0, [])
        hist.begin_turn(None)
        with pytest.raises(EventOrderError):
            hist.begin_turn(None)
        with pytest.raises(EventOrderError):
            hist.record_move(None, None, True)
        with pytest.raises(EventOrderError):
            hist.encode_stack(PRE_MOVE)

    def test_own_planes_track_ground_truth(self):
        """Event-derived own pieces equal the referee's occupancy each turn."""
        state = eng.initial_state()
        histories = {eng.WHITE: fresh_history(eng.WHITE), eng.BLACK: fresh_history(eng.BLACK)}
        rng = np.random.default_rng(11)
        pending_capture = {eng.WHITE: None, eng.BLACK: None}
        for _ in range(120):
            if eng.is_terminal(state) is not None:
                break
            color = state.side_to_move
            hist = histories[color]
            hist.begin_turn(pending_capture[color])
            pending_capture[color] = None
            assert hist.own_bitboards() == tuple(
                state.piece_bb(color, k) for k in range(6))
            hist.record_sense(*sense_at(state, int(rng.integers(64))))
            moves = eng.legal_moves(state)
            request = moves[int(rng.integers(len(moves)))]
            state, outcome = eng.request_move(state, request)
            hist.record_move(outcome.taken_move, outcome.capture_square, outcome.was_illegal)
            pending_capture[eng.opponent(color)] = outcome.capture_square
            assert hist.own_bitboards() == tuple(
                state.piece_bb(color, k) for k in range(6))

    def test_one_hot_groups_have_at_most_one_bit(self, oracle_positions):
        hist = fresh_history()
        state = eng.initial_state()
        rng = np.random.default_rng(13)
        pending = None
        for _ in range(40):
            if eng.is_terminal(state) is not None:
                break
            if state.side_to_move == eng.WHITE:
                hist.begin_turn(pending)
                pending = None
                hist.record_sense(*sense_at(state, int(rng.integers(64))))
                moves = eng.legal_moves(state)
                state, outcome = eng.request_move(state, moves[int(rng.integers(len(moves)))])
                hist.record_move(outcome.taken_move, outcome.capture_square, outcome.was_illegal)
            else:
                moves = eng.legal_moves(state)
                state, outcome = eng.request_move(state, moves[int(rng.integers(len(moves)))])
                pending = outcome.capture_square
            for frame_obs in hist.frames:
                frame = encode_frame(frame_obs)
                assert frame[obs.PLANE_OPP_CAPTURE].sum() <= 1
                assert frame[obs.PLANE_MOVE_BASE:obs.PLANE_MY_CAPTURE].sum() <= 1
                assert frame[obs.PLANE_MY_CAPTURE].sum() <= 1


class TestObservationJson:
    def test_roundtrip(self):
        state = eng.initial_state()
        hist = fresh_history()
        hist.begin_turn(None)
        hist.record_sense(*sense_at(state, parse_square("e5")))
        hist.record_move(mv("e2e4"), None, False)
        original = hist.frames[-1]
        data = obs.observation_to_json(original)
        assert data["color"] == "white"
        assert data["my_last_move"] == "e2e4"
        assert obs.observation_from_json(data) == original
