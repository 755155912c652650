"""Slow, obviously-correct move generator used as a cross-check oracle.

Kept deliberately independent from the bitboard engine: it converts the
state to an 8x8 mailbox and walks piece geometry square by square with
(file, rank) coordinates. Used only by tests and the data validator.
"""

from __future__ import annotations

from .engine import (
    BISHOP,
    CASTLE_BK,
    CASTLE_BQ,
    CASTLE_WK,
    CASTLE_WQ,
    KING,
    KNIGHT,
    PAWN,
    QUEEN,
    ROOK,
    WHITE,
    GroundState,
    Move,
)

_DIAGONALS = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
_STRAIGHTS = [(1, 0), (-1, 0), (0, 1), (0, -1)]
_KNIGHT_JUMPS = [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)]


def _mailbox(state: GroundState):
    board = [[None] * 8 for _ in range(8)]
    for idx, bb in enumerate(state.pieces):
        color, kind = divmod(idx, 6)
        for sq in range(64):
            if (bb >> sq) & 1:
                board[sq >> 3][sq & 7] = (color, kind)
    return board


def _on_board(f, r):
    return 0 <= f < 8 and 0 <= r < 8


def naive_legal_moves(state: GroundState) -> set:
    """Set of every geometry-legal move for the side to move (no pass)."""
    board = _mailbox(state)
    color = state.side_to_move
    moves = set()

    def add(ff, fr, tf, tr, promotions=(None,)):
        for promo in promotions:
            moves.add(Move(fr * 8 + ff, tr * 8 + tf, promo))

    def walk(ff, fr, directions):
        for df, dr in directions:
            tf, tr = ff + df, fr + dr
            while _on_board(tf, tr):
                target = board[tr][tf]
                if target is None:
                    add(ff, fr, tf, tr)
                elif target[0] != color:
                    add(ff, fr, tf, tr)
                    break
                else:
                    break
                tf += df
                tr += dr

    forward = 1 if color == WHITE else -1
    start_rank = 1 if color == WHITE else 6
    last_rank = 7 if color == WHITE else 0
    promos = (QUEEN, ROOK, BISHOP, KNIGHT)

    for fr in range(8):
        for ff in range(8):
            piece = board[fr][ff]
            if piece is None or piece[0] != color:
                continue
            kind = piece[1]
            if kind == PAWN:
                tr = fr + forward
                if _on_board(ff, tr) and board[tr][ff] is None:
                    add(ff, fr, ff, tr, promos if tr == last_rank else (None,))
                    if fr == start_rank and board[fr + 2 * forward][ff] is None:
                        add(ff, fr, ff, fr + 2 * forward)
                for df in (-1, 1):
                    tf = ff + df
                    if not _on_board(tf, tr):
                        continue
                    target = board[tr][tf]
                    is_ep = state.en_passant is not None and tr * 8 + tf == state.en_passant
                    if (target is not None and target[0] != color) or is_ep:
                        add(ff, fr, tf, tr, promos if tr == last_rank else (None,))
            elif kind == KNIGHT:
                for df, dr in _KNIGHT_JUMPS:
                    tf, tr = ff + df, fr + dr
                    if _on_board(tf, tr) and (board[tr][tf] is None or board[tr][tf][0] != color):
                        add(ff, fr, tf, tr)
            elif kind == BISHOP:
                walk(ff, fr, _DIAGONALS)
            elif kind == ROOK:
                walk(ff, fr, _STRAIGHTS)
            elif kind == QUEEN:
                walk(ff, fr, _DIAGONALS + _STRAIGHTS)
            elif kind == KING:
                for df in (-1, 0, 1):
                    for dr in (-1, 0, 1):
                        if df == dr == 0:
                            continue
                        tf, tr = ff + df, fr + dr
                        if _on_board(tf, tr) and (board[tr][tf] is None or board[tr][tf][0] != color):
                            add(ff, fr, tf, tr)
                # Castling needs only the right plus an empty path; no check
                # conditions exist in this variant.
                home = 0 if color == WHITE else 7
                if (ff, fr) == (4, home):
                    kingside = CASTLE_WK if color == WHITE else CASTLE_BK
                    queenside = CASTLE_WQ if color == WHITE else CASTLE_BQ
                    if state.castling & kingside and board[home][5] is None and board[home][6] is None:
                        add(4, home, 6, home)
                    if state.castling & queenside and all(board[home][f] is None for f in (1, 2, 3)):
                        add(4, home, 2, home)
    return moves
