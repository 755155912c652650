"""Referee engine for Reconnaissance Blind Chess.

Holds the ground-truth board and adjudicates everything the players are not
allowed to see. The variant rules differ from regular chess in ways that
simplify move generation a lot:

  * there is no concept of check: kings may move into attacked squares and
    castling only needs rights plus an empty path,
  * the game is won by actually capturing the king,
  * a sliding move through an enemy piece is truncated to capturing it,
  * an illegal request is consumed as a pass (the turn still advances),
  * stalemate, fifty-move rule and repetition draws do not exist; games are
    capped at TURN_CAP full moves and then drawn.

Board geometry uses the little-endian square convention a1=0 .. h8=63 with
bitboards stored as plain Python ints. All transitions are pure: every
operation returns a new ``GroundState`` and never mutates its input.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

WHITE = 0
BLACK = 1

PAWN, KNIGHT, BISHOP, ROOK, QUEEN, KING = range(6)
PIECE_CHARS = "PNBRQK"

# Castling-rights bitmask layout.
CASTLE_WK, CASTLE_WQ, CASTLE_BK, CASTLE_BQ = 1, 2, 4, 8

# Full moves after which the referee declares a draw.
TURN_CAP = 200

FULL_BOARD = (1 << 64) - 1


class EngineError(Exception):
    """Base class for referee errors."""


class GameOverError(EngineError):
    """An action was requested on a finished game."""


class MalformedMoveError(EngineError):
    """The move is not even well-formed (squares out of range etc.).

    Distinct from an *illegal* move, which is well-formed but not playable
    and is consumed as a pass.
    """


class MalformedStateError(EngineError):
    """A ground state violates its structural invariants."""


def square(file: int, rank: int) -> int:
    return rank * 8 + file


def square_file(sq: int) -> int:
    return sq & 7


def square_rank(sq: int) -> int:
    return sq >> 3


def square_name(sq: int) -> str:
    return "abcdefgh"[sq & 7] + str((sq >> 3) + 1)


def parse_square(name: str) -> int:
    if len(name) != 2 or name[0] not in "abcdefgh" or name[1] not in "12345678":
        raise ValueError(f"bad square name: {name!r}")
    return (int(name[1]) - 1) * 8 + "abcdefgh".index(name[0])


def opponent(color: int) -> int:
    return color ^ 1


class Move(NamedTuple):
    """A move request: from/to squares plus optional promotion, or a pass."""

    from_sq: Optional[int]
    to_sq: Optional[int]
    promotion: Optional[int] = None
    is_pass: bool = False

    @staticmethod
    def make_pass() -> "Move":
        return PASS

    @property
    def is_null(self) -> bool:
        return not self.is_pass and self.from_sq is None and self.to_sq is None

    def uci(self) -> str:
        if self.is_pass:
            return "pass"
        if self.is_null:
            return "null"
        promo = "" if self.promotion is None else PIECE_CHARS[self.promotion].lower()
        return square_name(self.from_sq) + square_name(self.to_sq) + promo

    @staticmethod
    def from_uci(text: str) -> "Move":
        if text == "pass" or text == "0000":
            return PASS
        if text == "null":
            return NULL_MOVE
        if len(text) not in (4, 5):
            raise ValueError(f"bad move string: {text!r}")
        from_sq = parse_square(text[0:2])
        to_sq = parse_square(text[2:4])
        promotion = None
        if len(text) == 5:
            ch = text[4].upper()
            if ch not in "NBRQ":
                raise ValueError(f"bad promotion piece: {text!r}")
            promotion = PIECE_CHARS.index(ch)
        return Move(from_sq, to_sq, promotion)


PASS = Move(None, None, None, True)

# Canonical always-illegal request: it consumes the turn with was_illegal
# set. Used when a sampled policy index has no board interpretation (the
# 73x64 action space is over-complete and moves are not masked).
NULL_MOVE = Move(None, None, None, False)


class MoveOutcome(NamedTuple):
    """What the referee reports back to the mover."""

    taken_move: Optional[Move]
    capture_square: Optional[int]
    was_illegal: bool


class SenseOutcome(NamedTuple):
    """Ground truth for every board square inside the clipped 3x3 window."""

    revealed: tuple  # of (square, Optional[(color, piece_kind)])

    def squares(self) -> tuple:
        return tuple(sq for sq, _ in self.revealed)


@dataclass(frozen=True)
class GameResult:
    winner: Optional[int]  # WHITE / BLACK, None for a draw
    reason: str  # "king_captured" | "turn_cap_draw"

    def score_for(self, color: int) -> float:
        if self.winner is None:
            return 0.5
        return 1.0 if self.winner == color else 0.0


@dataclass(frozen=True)
class GroundState:
    """The referee's full hidden board. Never shown to players mid-game."""

    pieces: tuple  # 12 bitboards indexed color*6 + kind
    side_to_move: int
    castling: int
    en_passant: Optional[int]
    fullmove: int
    result: Optional[GameResult] = None

    def piece_bb(self, color: int, kind: int) -> int:
        return self.pieces[color * 6 + kind]

    def color_occ(self, color: int) -> int:
        p = self.pieces
        base = color * 6
        return p[base] | p[base + 1] | p[base + 2] | p[base + 3] | p[base + 4] | p[base + 5]

    def occupied(self) -> int:
        return self.color_occ(WHITE) | self.color_occ(BLACK)

    def piece_at(self, sq: int) -> Optional[tuple]:
        """(color, kind) at sq, or None."""
        bit = 1 << sq
        for idx, bb in enumerate(self.pieces):
            if bb & bit:
                return divmod(idx, 6)
        return None

    def king_square(self, color: int) -> Optional[int]:
        bb = self.piece_bb(color, KING)
        return bb.bit_length() - 1 if bb else None


# ---------------------------------------------------------------------------
# Precomputed attack tables
# ---------------------------------------------------------------------------

def _build_step_table(deltas):
    table = []
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        bb = 0
        for df, dr in deltas:
            nf, nr = f + df, r + dr
            if 0 <= nf < 8 and 0 <= nr < 8:
                bb |= 1 << (nr * 8 + nf)
        table.append(bb)
    return table


KNIGHT_DELTAS = [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)]
KING_DELTAS = [(df, dr) for df in (-1, 0, 1) for dr in (-1, 0, 1) if (df, dr) != (0, 0)]

KNIGHT_ATTACKS = _build_step_table(KNIGHT_DELTAS)
KING_ATTACKS = _build_step_table(KING_DELTAS)
# Pawn capture targets, indexed [color][square].
PAWN_ATTACKS = (
    _build_step_table([(-1, 1), (1, 1)]),
    _build_step_table([(-1, -1), (1, -1)]),
)

# Ray directions as (dfile, drank); positive rays scan with lsb, negative with msb.
_RAY_DIRS = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)]
_POSITIVE_RAY = [dr > 0 or (dr == 0 and df > 0) for df, dr in _RAY_DIRS]


def _build_rays():
    rays = []
    for df, dr in _RAY_DIRS:
        per_sq = []
        for sq in range(64):
            f, r = sq & 7, sq >> 3
            bb = 0
            nf, nr = f + df, r + dr
            while 0 <= nf < 8 and 0 <= nr < 8:
                bb |= 1 << (nr * 8 + nf)
                nf += df
                nr += dr
            per_sq.append(bb)
        rays.append(per_sq)
    return rays


RAYS = _build_rays()
_BISHOP_DIRS = (1, 3, 5, 7)
_ROOK_DIRS = (0, 2, 4, 6)


def _slider_attacks(sq: int, occupied: int, dirs) -> int:
    attacks = 0
    for d in dirs:
        ray = RAYS[d][sq]
        blockers = ray & occupied
        if blockers:
            if _POSITIVE_RAY[d]:
                first = (blockers & -blockers).bit_length() - 1
            else:
                first = blockers.bit_length() - 1
            ray ^= RAYS[d][first]
        attacks |= ray
    return attacks


def bishop_attacks(sq: int, occupied: int) -> int:
    return _slider_attacks(sq, occupied, _BISHOP_DIRS)


def rook_attacks(sq: int, occupied: int) -> int:
    return _slider_attacks(sq, occupied, _ROOK_DIRS)


def queen_attacks(sq: int, occupied: int) -> int:
    return _slider_attacks(sq, occupied, _BISHOP_DIRS) | _slider_attacks(sq, occupied, _ROOK_DIRS)


def _bits(bb: int):
    while bb:
        b = bb & -bb
        yield b.bit_length() - 1
        bb ^= b


# ---------------------------------------------------------------------------
# State construction and validation
# ---------------------------------------------------------------------------

def initial_state() -> GroundState:
    pieces = [0] * 12
    pieces[WHITE * 6 + PAWN] = 0xFF00
    pieces[WHITE * 6 + KNIGHT] = (1 << 1) | (1 << 6)
    pieces[WHITE * 6 + BISHOP] = (1 << 2) | (1 << 5)
    pieces[WHITE * 6 + ROOK] = (1 << 0) | (1 << 7)
    pieces[WHITE * 6 + QUEEN] = 1 << 3
    pieces[WHITE * 6 + KING] = 1 << 4
    pieces[BLACK * 6 + PAWN] = 0xFF00 << 40
    pieces[BLACK * 6 + KNIGHT] = ((1 << 1) | (1 << 6)) << 56
    pieces[BLACK * 6 + BISHOP] = ((1 << 2) | (1 << 5)) << 56
    pieces[BLACK * 6 + ROOK] = ((1 << 0) | (1 << 7)) << 56
    pieces[BLACK * 6 + QUEEN] = (1 << 3) << 56
    pieces[BLACK * 6 + KING] = (1 << 4) << 56
    return GroundState(
        pieces=tuple(pieces),
        side_to_move=WHITE,
        castling=CASTLE_WK | CASTLE_WQ | CASTLE_BK | CASTLE_BQ,
        en_passant=None,
        fullmove=1,
    )


def validate_state(state: GroundState) -> None:
    """Raise MalformedStateError on any structural invariant violation."""
    union = 0
    for bb in state.pieces:
        if bb & ~FULL_BOARD:
            raise MalformedStateError("bitboard has bits outside the board")
        if union & bb:
            raise MalformedStateError("occupancy sets overlap")
        union |= bb
    for color in (WHITE, BLACK):
        kings = bin(state.piece_bb(color, KING)).count("1")
        if kings > 1:
            raise MalformedStateError(f"side {color} has {kings} kings")
        if kings == 0 and state.result is None:
            raise MalformedStateError("missing king but result not set")
    if state.en_passant is not None and square_rank(state.en_passant) not in (2, 5):
        raise MalformedStateError("en-passant square must be on rank 3 or 6")
    if state.fullmove < 1:
        raise MalformedStateError("fullmove count must be >= 1")


# ---------------------------------------------------------------------------
# Move generation
# ---------------------------------------------------------------------------

def _pawn_moves(color: int, pawns: int, occupied: int, enemy: int,
                en_passant: Optional[int], out: list) -> None:
    last_rank = 7 if color == WHITE else 0
    start_rank = 1 if color == WHITE else 6
    step = 8 if color == WHITE else -8
    ep_bit = 0 if en_passant is None else (1 << en_passant)
    for from_sq in _bits(pawns):
        one = from_sq + step
        if not (occupied >> one) & 1:
            _emit_pawn(from_sq, one, last_rank, out)
            if square_rank(from_sq) == start_rank:
                two = one + step
                if not (occupied >> two) & 1:
                    out.append(Move(from_sq, two))
        caps = PAWN_ATTACKS[color][from_sq] & (enemy | ep_bit)
        for to_sq in _bits(caps):
            _emit_pawn(from_sq, to_sq, last_rank, out)


def _emit_pawn(from_sq: int, to_sq: int, last_rank: int, out: list) -> None:
    if square_rank(to_sq) == last_rank:
        out.extend(Move(from_sq, to_sq, promo) for promo in (QUEEN, ROOK, BISHOP, KNIGHT))
    else:
        out.append(Move(from_sq, to_sq))


def legal_moves(state: GroundState) -> list:
    """All geometry-legal moves for the side to move. Pass is not listed.

    Check rules are void in this variant, so this is plain pseudo-legal
    generation: piece geometry, blockers, en passant, and castling gated
    only on rights plus an empty path between king and rook.
    """
    if state.result is not None:
        raise GameOverError("game is over")
    color = state.side_to_move
    own = state.color_occ(color)
    enemy = state.color_occ(opponent(color))
    occupied = own | enemy
    moves: list = []

    _pawn_moves(color, state.piece_bb(color, PAWN), occupied, enemy,
                state.en_passant, moves)
    for from_sq in _bits(state.piece_bb(color, KNIGHT)):
        for to_sq in _bits(KNIGHT_ATTACKS[from_sq] & ~own):
            moves.append(Move(from_sq, to_sq))
    for from_sq in _bits(state.piece_bb(color, BISHOP)):
        for to_sq in _bits(bishop_attacks(from_sq, occupied) & ~own):
            moves.append(Move(from_sq, to_sq))
    for from_sq in _bits(state.piece_bb(color, ROOK)):
        for to_sq in _bits(rook_attacks(from_sq, occupied) & ~own):
            moves.append(Move(from_sq, to_sq))
    for from_sq in _bits(state.piece_bb(color, QUEEN)):
        for to_sq in _bits(queen_attacks(from_sq, occupied) & ~own):
            moves.append(Move(from_sq, to_sq))
    king_bb = state.piece_bb(color, KING)
    if king_bb:
        from_sq = king_bb.bit_length() - 1
        for to_sq in _bits(KING_ATTACKS[from_sq] & ~own):
            moves.append(Move(from_sq, to_sq))
        back = 0 if color == WHITE else 56
        if from_sq == back + 4:
            k_right = CASTLE_WK if color == WHITE else CASTLE_BK
            q_right = CASTLE_WQ if color == WHITE else CASTLE_BQ
            if state.castling & k_right and not occupied & (0b0110_0000 << back):
                moves.append(Move(from_sq, back + 6))
            if state.castling & q_right and not occupied & (0b0000_1110 << back):
                moves.append(Move(from_sq, back + 2))
    return moves


# ---------------------------------------------------------------------------
# Move application
# ---------------------------------------------------------------------------

def _castle_rights_after(castling: int, color: int, from_sq: int,
                         capture_sq: Optional[int]) -> int:
    if from_sq == (4 if color == WHITE else 60):
        castling &= ~(CASTLE_WK | CASTLE_WQ) if color == WHITE else ~(CASTLE_BK | CASTLE_BQ)
    for rook_sq, right in ((0, CASTLE_WQ), (7, CASTLE_WK), (56, CASTLE_BQ), (63, CASTLE_BK)):
        if from_sq == rook_sq or capture_sq == rook_sq:
            castling &= ~right
    return castling


def _resolve_request(state: GroundState, move: Move):
    """Map a requested move to the move actually taken, or None if illegal.

    Implements the truncation table: sliders capture the first enemy
    blocker on their path; a pawn double push with a blocked destination
    but free intermediate square becomes the single push; every other
    blocked or ungrammatical request is illegal.
    """
    color = state.side_to_move
    own = state.color_occ(color)
    enemy = state.color_occ(opponent(color))
    occupied = own | enemy
    from_sq, to_sq = move.from_sq, move.to_sq
    at = state.piece_at(from_sq)
    if at is None or at[0] != color:
        return None
    kind = at[1]

    if kind == PAWN:
        step = 8 if color == WHITE else -8
        start_rank = 1 if color == WHITE else 6
        if to_sq == from_sq + step:
            if (occupied >> to_sq) & 1 or move.promotion not in _promo_ok(color, to_sq):
                return None
            return move
        if to_sq == from_sq + 2 * step and square_rank(from_sq) == start_rank:
            if move.promotion is not None:
                return None
            if (occupied >> (from_sq + step)) & 1:
                return None
            if (occupied >> to_sq) & 1:
                return Move(from_sq, from_sq + step)  # truncated double push
            return move
        if (PAWN_ATTACKS[color][from_sq] >> to_sq) & 1:
            is_ep = state.en_passant is not None and to_sq == state.en_passant
            if ((enemy >> to_sq) & 1 or is_ep) and move.promotion in _promo_ok(color, to_sq):
                return move
        return None

    if move.promotion is not None:
        return None

    if kind == KNIGHT:
        return move if (KNIGHT_ATTACKS[from_sq] >> to_sq) & 1 and not (own >> to_sq) & 1 else None

    if kind == KING:
        if (KING_ATTACKS[from_sq] >> to_sq) & 1:
            return move if not (own >> to_sq) & 1 else None
        back = 0 if color == WHITE else 56
        if from_sq == back + 4 and to_sq in (back + 6, back + 2):
            kingside = to_sq == back + 6
            right = (CASTLE_WK if kingside else CASTLE_WQ) if color == WHITE \
                else (CASTLE_BK if kingside else CASTLE_BQ)
            path = (0b0110_0000 if kingside else 0b0000_1110) << back
            if state.castling & right and not occupied & path:
                return move
        return None

    # Sliders: bishop/rook/queen.
    dirs = {BISHOP: _BISHOP_DIRS, ROOK: _ROOK_DIRS, QUEEN: _BISHOP_DIRS + _ROOK_DIRS}[kind]
    for d in dirs:
        if (RAYS[d][from_sq] >> to_sq) & 1:
            ray_to_target = RAYS[d][from_sq] & ~RAYS[d][to_sq] & ~(1 << to_sq)
            blockers = ray_to_target & occupied
            if blockers:
                if _POSITIVE_RAY[d]:
                    first = (blockers & -blockers).bit_length() - 1
                else:
                    first = blockers.bit_length() - 1
                return Move(from_sq, first) if (enemy >> first) & 1 else None
            if (own >> to_sq) & 1:
                return None
            return move
    return None


def _promo_ok(color: int, to_sq: int):
    last_rank = 7 if color == WHITE else 0
    if square_rank(to_sq) == last_rank:
        # A bare request to the last rank promotes to queen.
        return (None, QUEEN, ROOK, BISHOP, KNIGHT)
    return (None,)


def _advance_turn(state: GroundState, pieces: tuple, castling: int,
                  en_passant: Optional[int], result: Optional[GameResult]) -> GroundState:
    color = state.side_to_move
    return GroundState(
        pieces=pieces,
        side_to_move=opponent(color),
        castling=castling,
        en_passant=en_passant,
        fullmove=state.fullmove + (1 if color == BLACK else 0),
        result=result,
    )


def request_move(state: GroundState, requested: Move):
    """Adjudicate a move request. Returns (new_state, MoveOutcome).

    Illegal requests consume the turn like a pass; only structurally
    malformed moves raise.
    """
    if state.result is not None:
        raise GameOverError("game is over")
    if not isinstance(requested, Move):
        raise MalformedMoveError(f"not a Move: {requested!r}")
    if requested.is_pass:
        if requested.from_sq is not None or requested.to_sq is not None or requested.promotion is not None:
            raise MalformedMoveError("pass must have no squares or promotion")
        new_state = _advance_turn(state, state.pieces, state.castling, None, None)
        return new_state, MoveOutcome(PASS, None, False)
    if requested.is_null:
        new_state = _advance_turn(state, state.pieces, state.castling, None, None)
        return new_state, MoveOutcome(None, None, True)
    for sq in (requested.from_sq, requested.to_sq):
        if not isinstance(sq, int) or not 0 <= sq < 64:
            raise MalformedMoveError(f"square out of range in {requested!r}")
    if requested.from_sq == requested.to_sq:
        raise MalformedMoveError("from and to squares are equal")
    if requested.promotion is not None and requested.promotion not in (KNIGHT, BISHOP, ROOK, QUEEN):
        raise MalformedMoveError(f"bad promotion kind {requested.promotion!r}")

    taken = _resolve_request(state, requested)
    if taken is None:
        new_state = _advance_turn(state, state.pieces, state.castling, None, None)
        return new_state, MoveOutcome(None, None, True)

    color = state.side_to_move
    kind = state.piece_at(taken.from_sq)[1]
    from_sq, to_sq = taken.from_sq, taken.to_sq
    pieces = list(state.pieces)

    # En-passant captures remove the pawn behind the target square; they are
    # the only capture where the destination square itself is empty.
    candidate = None
    if kind == PAWN and state.en_passant is not None and to_sq == state.en_passant \
            and (PAWN_ATTACKS[color][from_sq] >> to_sq) & 1 \
            and not (state.occupied() >> to_sq) & 1:
        candidate = to_sq - 8 if color == WHITE else to_sq + 8
    elif (state.color_occ(opponent(color)) >> to_sq) & 1:
        candidate = to_sq

    capture_square = None
    result = None
    if candidate is not None:
        cap_bit = 1 << candidate
        base = opponent(color) * 6
        for k in range(6):
            if pieces[base + k] & cap_bit:
                pieces[base + k] ^= cap_bit
                capture_square = candidate
                if k == KING:
                    result = GameResult(winner=color, reason="king_captured")
                break

    pieces[color * 6 + kind] ^= 1 << from_sq
    placed_kind = kind
    if kind == PAWN and taken.promotion is not None:
        placed_kind = taken.promotion
    elif kind == PAWN and square_rank(to_sq) == (7 if color == WHITE else 0):
        placed_kind = QUEEN
        taken = Move(from_sq, to_sq, QUEEN)
    pieces[color * 6 + placed_kind] |= 1 << to_sq

    if kind == KING and abs(to_sq - from_sq) == 2:
        back = 0 if color == WHITE else 56
        rook_from, rook_to = (back + 7, back + 5) if to_sq > from_sq else (back + 0, back + 3)
        pieces[color * 6 + ROOK] ^= (1 << rook_from) | (1 << rook_to)

    en_passant = None
    if kind == PAWN and abs(to_sq - from_sq) == 16:
        en_passant = (from_sq + to_sq) // 2

    castling = _castle_rights_after(state.castling, color, from_sq, capture_square)
    new_state = _advance_turn(state, tuple(pieces), castling, en_passant, result)
    return new_state, MoveOutcome(taken, capture_square, False)


# ---------------------------------------------------------------------------
# Sensing, notifications, termination
# ---------------------------------------------------------------------------

def sense_window(center: int) -> tuple:
    """Board squares inside the 3x3 window around center, clipped at edges."""
    f, r = center & 7, center >> 3
    return tuple(
        (r + dr) * 8 + (f + df)
        for dr in (-1, 0, 1)
        for df in (-1, 0, 1)
        if 0 <= f + df < 8 and 0 <= r + dr < 8
    )


def apply_sense(state: GroundState, center: int) -> SenseOutcome:
    """Reveal ground truth for the clipped 3x3 window. Does not mutate."""
    if state.result is not None:
        raise GameOverError("game is over")
    if not isinstance(center, int) or not 0 <= center < 64:
        raise MalformedMoveError(f"sense center out of range: {center!r}")
    return SenseOutcome(tuple((sq, state.piece_at(sq)) for sq in sense_window(center)))


def capture_notice(outcome: MoveOutcome, observer: int) -> Optional[int]:
    """Square where the observer's piece was just captured by the opponent.

    Reveals only the square: neither the capturing piece nor its origin.
    The observer argument documents whose notice this is; the outcome must
    come from the opponent's request_move.
    """
    del observer
    return outcome.capture_square


def is_terminal(state: GroundState, turn_cap: int = TURN_CAP) -> Optional[GameResult]:
    if state.result is not None:
        return state.result
    for color in (WHITE, BLACK):
        if not state.piece_bb(color, KING):
            return GameResult(winner=opponent(color), reason="king_captured")
    if state.fullmove > turn_cap:
        return GameResult(winner=None, reason="turn_cap_draw")
    return None


def with_result(state: GroundState, result: GameResult) -> GroundState:
    return replace(state, result=result)


# ---------------------------------------------------------------------------
# Extended-FEN serialization (debugging and fixtures)
# ---------------------------------------------------------------------------

_RESULT_TOKENS = {"white": WHITE, "black": BLACK, "draw": None}


def to_fen(state: GroundState) -> str:
    """Standard FEN fields plus a 7th result token ('*' while running).

    The halfmove clock is always 0 (no fifty-move rule in this variant) and
    the en-passant square is emitted after every double push.
    """
    rows = []
    for rank in range(7, -1, -1):
        row = ""
        empty = 0
        for file in range(8):
            piece = state.piece_at(rank * 8 + file)
            if piece is None:
                empty += 1
                continue
            if empty:
                row += str(empty)
                empty = 0
            ch = PIECE_CHARS[piece[1]]
            row += ch if piece[0] == WHITE else ch.lower()
        if empty:
            row += str(empty)
        rows.append(row)
    castle = ""
    for right, ch in ((CASTLE_WK, "K"), (CASTLE_WQ, "Q"), (CASTLE_BK, "k"), (CASTLE_BQ, "q")):
        if state.castling & right:
            castle += ch
    ep = "-" if state.en_passant is None else square_name(state.en_passant)
    if state.result is None:
        res = "*"
    elif state.result.winner is None:
        res = f"draw:{state.result.reason}"
    else:
        res = f"{'white' if state.result.winner == WHITE else 'black'}:{state.result.reason}"
    return (f"{'/'.join(rows)} {'wb'[state.side_to_move]} {castle or '-'} {ep} 0 "
            f"{state.fullmove} {res}")


def from_fen(text: str) -> GroundState:
    parts = text.split()
    if len(parts) not in (6, 7):
        raise ValueError(f"expected 6 or 7 FEN fields, got {len(parts)}")
    rows = parts[0].split("/")
    if len(rows) != 8:
        raise ValueError("expected 8 board rows")
    pieces = [0] * 12
    for rank_idx, row in enumerate(rows):
        rank = 7 - rank_idx
        file = 0
        for ch in row:
            if ch.isdigit():
                file += int(ch)
            else:
                kind = PIECE_CHARS.index(ch.upper())
                color = WHITE if ch.isupper() else BLACK
                pieces[color * 6 + kind] |= 1 << (rank * 8 + file)
                file += 1
        if file != 8:
            raise ValueError(f"bad row {row!r}")
    side = WHITE if parts[1] == "w" else BLACK
    castling = 0
    for ch, right in (("K", CASTLE_WK), ("Q", CASTLE_WQ), ("k", CASTLE_BK), ("q", CASTLE_BQ)):
        if ch in parts[2]:
            castling |= right
    en_passant = None if parts[3] == "-" else parse_square(parts[3])
    fullmove = int(parts[5])
    result = None
    if len(parts) == 7 and parts[6] != "*":
        winner_text, _, reason = parts[6].partition(":")
        result = GameResult(winner=_RESULT_TOKENS[winner_text], reason=reason)
    state = GroundState(tuple(pieces), side, castling, en_passant, fullmove, result)
    validate_state(state)
    return state
