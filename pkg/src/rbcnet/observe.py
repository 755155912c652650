"""Player-side observation tracking and network input encoding.

Everything here is computable from the event stream a player legitimately
receives: capture notices, sense results, and its own move results. The
ground-truth board never enters this module, which is what keeps the agent
honest about the fog of war.

A turn's knowledge is a 90-plane 8x8 frame; the network input is the 20
most recent frames stacked oldest-first into an (1800, 8, 8) tensor, where
the newest slot holds the current turn's partially-filled frame. Moves map
to a 73x64 (+ pass) index space, senses to a plain 64-way square index.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import (
    BISHOP,
    BLACK,
    KING,
    KNIGHT,
    PIECE_CHARS,
    QUEEN,
    ROOK,
    WHITE,
    Move,
    parse_square,
    square_file,
    square_name,
    square_rank,
)

FRAME_PLANES = 90
HISTORY_LENGTH = 20
STACK_CHANNELS = FRAME_PLANES * HISTORY_LENGTH  # 1800
MOVE_INDEX_COUNT = 4673
PASS_INDEX = 4672
SENSE_INDEX_COUNT = 64
PACKED_FRAME_BYTES = FRAME_PLANES * 64 // 8  # 720

# Frame plane layout.
PLANE_OPP_CAPTURE = 0
PLANE_MOVE_BASE = 1          # 73 planes, indexed by move-encoding plane
PLANE_MY_CAPTURE = 74
PLANE_ILLEGAL = 75
PLANE_OWN_BASE = 76          # 6 planes, P N B R Q K
PLANE_SENSE_WINDOW = 82
PLANE_SENSE_BASE = 83        # 6 planes of opponent pieces seen in the window
PLANE_COLOR = 89

PRE_SENSE = "pre_sense"
PRE_MOVE = "pre_move"


class EncodingError(Exception):
    """A move cannot be represented in the index space."""


class EventOrderError(Exception):
    """Turn events arrived out of their canonical order."""


# ---------------------------------------------------------------------------
# Move and sense index codecs
# ---------------------------------------------------------------------------

# Queen-style directions N, NE, E, SE, S, SW, W, NW as (dfile, drank).
_QUEEN_DIRS = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)]
_QUEEN_DIR_INDEX = {d: i for i, d in enumerate(_QUEEN_DIRS)}
_KNIGHT_ORDER = [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)]
_KNIGHT_INDEX = {d: i for i, d in enumerate(_KNIGHT_ORDER)}
_UNDERPROMO_PIECES = (KNIGHT, BISHOP, ROOK)


def encode_move_index(move: Move) -> int:
    """Index in the 4673-way action space. Pass maps to the last slot.

    The board frame is white's for both colors; planes 0-55 are queen-style
    direction*7+distance, 56-63 knight jumps, 64-72 underpromotions.
    """
    if move.is_pass:
        return PASS_INDEX
    df = square_file(move.to_sq) - square_file(move.from_sq)
    dr = square_rank(move.to_sq) - square_rank(move.from_sq)
    if (df, dr) == (0, 0):
        raise EncodingError(f"degenerate move {move!r}")
    if move.promotion in _UNDERPROMO_PIECES:
        if abs(df) > 1 or dr not in (1, -1):
            raise EncodingError(f"bad underpromotion geometry {move!r}")
        # Direction is taken from the mover's viewpoint; a promoting white
        # pawn steps up the board, a black one down.
        direction = 1 + (df if dr > 0 else -df)
        plane = 64 + _UNDERPROMO_PIECES.index(move.promotion) * 3 + direction
    elif (df, dr) in _KNIGHT_INDEX:
        plane = 56 + _KNIGHT_INDEX[(df, dr)]
    else:
        distance = max(abs(df), abs(dr))
        unit = (df // distance if df else 0, dr // distance if dr else 0)
        if unit not in _QUEEN_DIR_INDEX or (unit[0] * distance, unit[1] * distance) != (df, dr):
            raise EncodingError(f"move {move!r} is not on a line")
        plane = _QUEEN_DIR_INDEX[unit] * 7 + distance - 1
    return plane * 64 + move.from_sq


def decode_move_index(index: int, color: int = WHITE, pawn_squares: int = 0) -> Move:
    """Inverse of encode_move_index.

    ``pawn_squares`` is a bitboard of the mover's pawns: queen-style moves a
    pawn makes onto its last rank decode with an implicit queen promotion,
    matching how bare promotion requests are adjudicated.
    """
    if not 0 <= index < MOVE_INDEX_COUNT:
        raise EncodingError(f"move index out of range: {index}")
    if index == PASS_INDEX:
        return Move.make_pass()
    plane, from_sq = divmod(index, 64)
    f, r = square_file(from_sq), square_rank(from_sq)
    if plane < 56:
        direction, distance = divmod(plane, 7)
        df, dr = _QUEEN_DIRS[direction]
        tf, tr = f + df * (distance + 1), r + dr * (distance + 1)
        promotion = None
        if (pawn_squares >> from_sq) & 1 and tr == (7 if color == WHITE else 0):
            promotion = QUEEN
    elif plane < 64:
        df, dr = _KNIGHT_ORDER[plane - 56]
        tf, tr = f + df, r + dr
        promotion = None
    else:
        piece, direction = divmod(plane - 64, 3)
        df = direction - 1 if color == WHITE else 1 - direction
        tf, tr = f + df, r + (1 if color == WHITE else -1)
        promotion = _UNDERPROMO_PIECES[piece]
    if not (0 <= tf < 8 and 0 <= tr < 8):
        raise EncodingError(f"index {index} decodes off the board")
    return Move(from_sq, tr * 8 + tf, promotion)


def encode_sense_index(center: int) -> int:
    if not 0 <= center < 64:
        raise EncodingError(f"sense center out of range: {center}")
    return center


def decode_sense_index(index: int) -> int:
    if not 0 <= index < SENSE_INDEX_COUNT:
        raise EncodingError(f"sense index out of range: {index}")
    return index


# ---------------------------------------------------------------------------
# Observations and frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Observation:
    """Everything one player learned in one completed turn."""

    color: int
    opp_capture_square: Optional[int]
    own_pieces: tuple  # 6 bitboards P N B R Q K
    last_sense: Optional[int]
    sense_window: tuple  # squares revealed by the sense, () if none
    sense_pieces: tuple  # 6 bitboards of opponent pieces in the window
    my_last_move: Optional[Move]  # own taken move; None on pass/illegal/first
    my_capture_square: Optional[int]
    last_was_illegal: bool


def _put_bitboard(frame: np.ndarray, plane: int, bb: int) -> None:
    if bb:
        frame[plane] = np.unpackbits(
            np.frombuffer(bb.to_bytes(8, "little"), dtype=np.uint8), bitorder="little"
        ).reshape(8, 8)


def _squares_to_bb(squares) -> int:
    bb = 0
    for sq in squares:
        bb |= 1 << sq
    return bb


def encode_frame(obs: Observation) -> np.ndarray:
    """One observation as a (90, 8, 8) binary frame, uint8."""
    frame = np.zeros((FRAME_PLANES, 8, 8), dtype=np.uint8)
    if obs.opp_capture_square is not None:
        frame[PLANE_OPP_CAPTURE, obs.opp_capture_square >> 3, obs.opp_capture_square & 7] = 1
    if obs.my_last_move is not None and not obs.my_last_move.is_pass:
        index = encode_move_index(obs.my_last_move)
        plane, from_sq = divmod(index, 64)
        frame[PLANE_MOVE_BASE + plane, from_sq >> 3, from_sq & 7] = 1
    if obs.my_capture_square is not None:
        frame[PLANE_MY_CAPTURE, obs.my_capture_square >> 3, obs.my_capture_square & 7] = 1
    if obs.last_was_illegal:
        frame[PLANE_ILLEGAL] = 1
    for kind in range(6):
        _put_bitboard(frame, PLANE_OWN_BASE + kind, obs.own_pieces[kind])
    _put_bitboard(frame, PLANE_SENSE_WINDOW, _squares_to_bb(obs.sense_window))
    for kind in range(6):
        _put_bitboard(frame, PLANE_SENSE_BASE + kind, obs.sense_pieces[kind])
    if obs.color == WHITE:
        frame[PLANE_COLOR] = 1
    assert frame.shape == (FRAME_PLANES, 8, 8)
    return frame


def pack_frame(frame: np.ndarray) -> np.ndarray:
    """Bit-pack a (90, 8, 8) frame into 720 bytes for cheap storage."""
    return np.packbits(frame.reshape(-1))


def unpack_stacks(packed: np.ndarray) -> np.ndarray:
    """(N, 20, 720) packed frames -> (N, 1800, 8, 8) float32 plane stacks."""
    n = packed.shape[0]
    flat = np.unpackbits(packed.reshape(n, -1), axis=1)
    return flat.reshape(n, STACK_CHANNELS, 8, 8).astype(np.float32)


_ZERO_PACKED = np.zeros(PACKED_FRAME_BYTES, dtype=np.uint8)

_INITIAL_OWN = {
    WHITE: (0xFF00, (1 << 1) | (1 << 6), (1 << 2) | (1 << 5), (1 << 0) | (1 << 7), 1 << 3, 1 << 4),
    BLACK: (0xFF00 << 40, ((1 << 1) | (1 << 6)) << 56, ((1 << 2) | (1 << 5)) << 56,
            ((1 << 0) | (1 << 7)) << 56, (1 << 3) << 56, (1 << 4) << 56),
}

_IDLE, _BEGUN, _SENSED = "idle", "begun", "sensed"


class ObservationHistory:
    """Ring buffer of the last 20 turns of one player's observations.

    Turn events must arrive in canonical order: ``begin_turn`` (opponent's
    capture notice), ``record_sense``, ``record_move``. The third call
    completes the turn's frame and pushes it, evicting the oldest. Own piece
    placement is derived purely from the event stream, so a history can be
    driven by a remote client with no board access at all.
    """

    def __init__(self, color: int):
        self.color = color
        self.turn_no = 0
        self._own = list(_INITIAL_OWN[color])
        self._frames: deque = deque(maxlen=HISTORY_LENGTH)  # packed completed frames
        self._observations: deque = deque(maxlen=HISTORY_LENGTH)
        self._phase = _IDLE
        self._pending_opp_capture: Optional[int] = None
        self._pending_sense: Optional[int] = None
        self._pending_window: tuple = ()
        self._pending_sense_pieces: tuple = (0,) * 6
        self._pending_own: tuple = ()

    @property
    def frames(self):
        """Completed observations, oldest first."""
        return tuple(self._observations)

    # -- event intake ------------------------------------------------------

    def begin_turn(self, opp_capture_square: Optional[int]) -> None:
        if self._phase != _IDLE:
            raise EventOrderError(f"begin_turn in phase {self._phase}")
        if opp_capture_square is not None:
            bit = 1 << opp_capture_square
            for kind in range(6):
                if self._own[kind] & bit:
                    self._own[kind] ^= bit
                    break
            else:
                raise ValueError(
                    f"capture notice at {opp_capture_square} but no own piece there")
        self.turn_no += 1
        self._pending_opp_capture = opp_capture_square
        self._pending_own = tuple(self._own)
        self._pending_sense = None
        self._pending_window = ()
        self._pending_sense_pieces = (0,) * 6
        self._phase = _BEGUN

    def record_sense(self, center: int, revealed) -> None:
        if self._phase != _BEGUN:
            raise EventOrderError(f"record_sense in phase {self._phase}")
        pieces = [0] * 6
        window = []
        for sq, piece in revealed:
            window.append(sq)
            if piece is not None and piece[0] != self.color:
                pieces[piece[1]] |= 1 << sq
        self._pending_sense = center
        self._pending_window = tuple(window)
        self._pending_sense_pieces = tuple(pieces)
        self._phase = _SENSED

    def record_move(self, taken_move: Optional[Move], capture_square: Optional[int],
                    was_illegal: bool) -> None:
        if self._phase != _SENSED:
            raise EventOrderError(f"record_move in phase {self._phase}")
        my_move = None
        if not was_illegal and taken_move is not None and not taken_move.is_pass:
            my_move = taken_move
            self._apply_own_move(taken_move)
        obs = Observation(
            color=self.color,
            opp_capture_square=self._pending_opp_capture,
            own_pieces=self._pending_own,
            last_sense=self._pending_sense,
            sense_window=self._pending_window,
            sense_pieces=self._pending_sense_pieces,
            my_last_move=my_move,
            my_capture_square=capture_square,
            last_was_illegal=was_illegal,
        )
        self._observations.append(obs)
        self._frames.append(pack_frame(encode_frame(obs)))
        self._phase = _IDLE

    def _apply_own_move(self, move: Move) -> None:
        from_bit, to_bit = 1 << move.from_sq, 1 << move.to_sq
        for kind in range(6):
            if self._own[kind] & from_bit:
                break
        else:
            raise ValueError(f"own move {move.uci()} from an empty square")
        self._own[kind] ^= from_bit
        if move.promotion is not None:
            self._own[move.promotion] |= to_bit
        else:
            self._own[kind] |= to_bit
        if kind == KING and abs(move.to_sq - move.from_sq) == 2:
            back = move.from_sq - 4
            rook_from, rook_to = (back + 7, back + 5) if move.to_sq > move.from_sq \
                else (back + 0, back + 3)
            self._own[ROOK] ^= (1 << rook_from) | (1 << rook_to)

    # -- encoding ----------------------------------------------------------

    def own_bitboards(self) -> tuple:
        return tuple(self._own)

    def _partial_frame(self, stage: str) -> np.ndarray:
        if stage == PRE_SENSE:
            if self._phase != _BEGUN:
                raise EventOrderError(f"pre-sense encode in phase {self._phase}")
        elif stage == PRE_MOVE:
            if self._phase != _SENSED:
                raise EventOrderError(f"pre-move encode in phase {self._phase}")
        else:
            raise ValueError(f"unknown stage {stage!r}")
        obs = Observation(
            color=self.color,
            opp_capture_square=self._pending_opp_capture,
            own_pieces=self._pending_own,
            last_sense=self._pending_sense if stage == PRE_MOVE else None,
            sense_window=self._pending_window if stage == PRE_MOVE else (),
            sense_pieces=self._pending_sense_pieces if stage == PRE_MOVE else (0,) * 6,
            my_last_move=None,
            my_capture_square=None,
            last_was_illegal=False,
        )
        return encode_frame(obs)

    def packed_stack(self, stage: str) -> np.ndarray:
        """(20, 720) uint8: 19 newest completed frames + the partial frame."""
        rows = np.empty((HISTORY_LENGTH, PACKED_FRAME_BYTES), dtype=np.uint8)
        completed = list(self._frames)[-(HISTORY_LENGTH - 1):]
        pad = HISTORY_LENGTH - 1 - len(completed)
        for i in range(pad):
            rows[i] = _ZERO_PACKED
        for i, packed in enumerate(completed):
            rows[pad + i] = packed
        rows[HISTORY_LENGTH - 1] = np.packbits(self._partial_frame(stage).reshape(-1))
        return rows

    def encode_stack(self, stage: str) -> np.ndarray:
        """The network input: (1800, 8, 8) float32, oldest frame first."""
        stack = unpack_stacks(self.packed_stack(stage)[None])[0]
        assert stack.shape == (STACK_CHANNELS, 8, 8)
        return stack


def encode_history(hist: ObservationHistory, stage: str) -> np.ndarray:
    return hist.encode_stack(stage)


def update_history(hist: ObservationHistory, opp_capture_square, sense_center,
                   sense_revealed, taken_move, capture_square, was_illegal) -> ObservationHistory:
    """Feed one full turn of events in canonical order. Mutates and returns hist."""
    hist.begin_turn(opp_capture_square)
    hist.record_sense(sense_center, sense_revealed)
    hist.record_move(taken_move, capture_square, was_illegal)
    return hist


# ---------------------------------------------------------------------------
# Canonical JSON form (used by game records and the service)
# ---------------------------------------------------------------------------

def _bb_to_names(bb: int):
    return [square_name(sq) for sq in range(64) if (bb >> sq) & 1]


def observation_to_json(obs: Observation) -> dict:
    return {
        "color": "white" if obs.color == WHITE else "black",
        "opp_capture_square": None if obs.opp_capture_square is None
        else square_name(obs.opp_capture_square),
        "my_last_move": None if obs.my_last_move is None else obs.my_last_move.uci(),
        "my_capture_square": None if obs.my_capture_square is None
        else square_name(obs.my_capture_square),
        "last_was_illegal": obs.last_was_illegal,
        "own_pieces": {PIECE_CHARS[k]: _bb_to_names(obs.own_pieces[k]) for k in range(6)},
        "last_sense": None if obs.last_sense is None else {
            "center": square_name(obs.last_sense),
            "window": [square_name(sq) for sq in obs.sense_window],
        },
        "sense_pieces": {PIECE_CHARS[k]: _bb_to_names(obs.sense_pieces[k]) for k in range(6)},
    }


def observation_from_json(data: dict) -> Observation:
    def names_to_bb(names):
        bb = 0
        for name in names:
            bb |= 1 << parse_square(name)
        return bb

    sense = data.get("last_sense")
    return Observation(
        color=WHITE if data["color"] == "white" else BLACK,
        opp_capture_square=None if data["opp_capture_square"] is None
        else parse_square(data["opp_capture_square"]),
        own_pieces=tuple(names_to_bb(data["own_pieces"][PIECE_CHARS[k]]) for k in range(6)),
        last_sense=None if sense is None else parse_square(sense["center"]),
        sense_window=() if sense is None else tuple(parse_square(s) for s in sense["window"]),
        sense_pieces=tuple(names_to_bb(data["sense_pieces"][PIECE_CHARS[k]]) for k in range(6)),
        my_last_move=None if data["my_last_move"] is None else Move.from_uci(data["my_last_move"]),
        my_capture_square=None if data["my_capture_square"] is None
        else parse_square(data["my_capture_square"]),
        last_was_illegal=data["last_was_illegal"],
    )
