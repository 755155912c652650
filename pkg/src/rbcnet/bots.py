"""Baseline bots and the network-backed player.

Bots see the game exclusively through Player callbacks. Own pieces are
tracked with an ObservationHistory (event-derived), and the "moves I can
verify myself" set is computed on a board that contains only own pieces:
full slider rays and pawn pushes, no pawn captures (an unseen enemy may or
may not be there), castling gated on own rights bookkeeping. The referee
truncates optimistic slider rays into captures, which is how these bots
ever take anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import engine as eng
from .engine import KING, ROOK, WHITE, Move
from .net import argmax_action, sample_action
from .observe import (
    PRE_MOVE,
    PRE_SENSE,
    EncodingError,
    ObservationHistory,
    decode_move_index,
    encode_move_index,
)
from .runner import Player

# Sense support of the scripted bots: centers in the inner 6x6 (files b..g,
# ranks 2..7), where the window is never clipped.
INNER_CENTERS = tuple(r * 8 + f for r in range(1, 7) for f in range(1, 7))


class ScriptedBot(Player):
    """Shared own-side bookkeeping for the scripted baselines."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.color: Optional[int] = None
        self.hist: Optional[ObservationHistory] = None
        self._king_moved = False
        self._rook_moved = {0: False, 7: False}  # by home file offset

    def handle_game_start(self, color: int) -> None:
        self.color = color
        self.hist = ObservationHistory(color)
        self._king_moved = False
        self._rook_moved = {0: False, 7: False}

    def handle_opponent_capture(self, square: Optional[int]) -> None:
        self.hist.begin_turn(square)

    def handle_sense_result(self, center: int, revealed) -> None:
        self.hist.record_sense(center, revealed)

    def handle_move_result(self, taken_move, capture_square, was_illegal) -> None:
        self.hist.record_move(taken_move, capture_square, was_illegal)
        if taken_move is not None and not was_illegal and not taken_move.is_pass:
            home = 0 if self.color == WHITE else 56
            if taken_move.from_sq == home + 4:
                self._king_moved = True
            for offset in (0, 7):
                if taken_move.from_sq == home + offset:
                    self._rook_moved[offset] = True

    def _own_castle_bits(self) -> int:
        if self._king_moved:
            return 0
        home = 0 if self.color == WHITE else 56
        rooks = self.hist.own_bitboards()[ROOK]
        bits = 0
        if not self._rook_moved[7] and (rooks >> (home + 7)) & 1:
            bits |= eng.CASTLE_WK if self.color == WHITE else eng.CASTLE_BK
        if not self._rook_moved[0] and (rooks >> home) & 1:
            bits |= eng.CASTLE_WQ if self.color == WHITE else eng.CASTLE_BQ
        return bits

    def own_view_moves(self) -> list:
        """Moves verifiable from own information alone."""
        pieces = [0] * 12
        for kind, bb in enumerate(self.hist.own_bitboards()):
            pieces[self.color * 6 + kind] = bb
        view = eng.GroundState(
            pieces=tuple(pieces), side_to_move=self.color,
            castling=self._own_castle_bits(), en_passant=None, fullmove=1)
        return eng.legal_moves(view)

    def _pick(self, options):
        return options[int(self.rng.integers(len(options)))]


class RandomBot(ScriptedBot):
    """Uniform sense over the inner 6x6, uniform own-view move, never passes."""

    def choose_sense(self) -> int:
        return int(self._pick(INNER_CENTERS))

    def choose_move(self) -> Move:
        return self._pick(self.own_view_moves())


class GreedyBot(ScriptedBot):
    """Memory-driven king hunter.

    Remembers enemy pieces from sense results and capture notices, attacks
    a remembered king first, then any remembered piece, and otherwise plays
    like RandomBot. Senses wherever its information is stalest.
    """

    def __init__(self, rng: np.random.Generator):
        super().__init__(rng)
        self.memory = {}        # square -> piece kind or None (unknown attacker)
        self.last_seen = [0] * 64
        self.turn = 0

    def handle_game_start(self, color: int) -> None:
        super().handle_game_start(color)
        self.memory = {}
        self.last_seen = [0] * 64
        self.turn = 0

    def handle_opponent_capture(self, square: Optional[int]) -> None:
        super().handle_opponent_capture(square)
        self.turn += 1
        if square is not None:
            self.memory[square] = None  # whatever captured us stands there

    def handle_sense_result(self, center: int, revealed) -> None:
        super().handle_sense_result(center, revealed)
        for square, piece in revealed:
            self.last_seen[square] = self.turn
            if piece is not None and piece[0] != self.color:
                self.memory[square] = piece[1]
            else:
                self.memory.pop(square, None)

    def handle_move_result(self, taken_move, capture_square, was_illegal) -> None:
        super().handle_move_result(taken_move, capture_square, was_illegal)
        if capture_square is not None:
            self.memory.pop(capture_square, None)
        if taken_move is not None and not was_illegal and not taken_move.is_pass:
            self.memory.pop(taken_move.to_sq, None)

    def choose_sense(self) -> int:
        own = 0
        for bb in self.hist.own_bitboards():
            own |= bb
        best, best_centers = -1, []
        for center in INNER_CENTERS:
            staleness = sum(self.turn - self.last_seen[sq]
                            for sq in eng.sense_window(center) if not (own >> sq) & 1)
            if staleness > best:
                best, best_centers = staleness, [center]
            elif staleness == best:
                best_centers.append(center)
        return int(self._pick(best_centers))

    def choose_move(self) -> Move:
        moves = self.own_view_moves()
        king_squares = {sq for sq, kind in self.memory.items() if kind == KING}
        strikes = [m for m in moves if m.to_sq in king_squares]
        if strikes:
            return self._pick(strikes)
        raids = [m for m in moves if m.to_sq in self.memory]
        if raids:
            return self._pick(raids)
        return self._pick(moves)


class NetBot(Player):
    """Plays straight from the policy heads over the observation history.

    No search, no state reconstruction. With ``mask_illegal`` off (the
    default), the raw move head is followed even into illegal requests,
    which the referee consumes as a pass.
    """

    def __init__(self, net, mode: str = "argmax", temperature: float = 1.0,
                 rng: Optional[np.random.Generator] = None, mask_illegal: bool = False):
        if mode not in ("argmax", "sample"):
            raise ValueError(f"unknown mode {mode!r}")
        self.net = net
        self.mode = mode
        self.temperature = temperature
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.mask_illegal = mask_illegal
        self.color: Optional[int] = None
        self.hist: Optional[ObservationHistory] = None
        self._helper = ScriptedBot(self.rng)  # own-view plumbing for masking

    def handle_game_start(self, color: int) -> None:
        self.color = color
        self._helper.handle_game_start(color)
        self.hist = self._helper.hist

    def handle_opponent_capture(self, square: Optional[int]) -> None:
        self._helper.handle_opponent_capture(square)

    def handle_sense_result(self, center: int, revealed) -> None:
        self._helper.handle_sense_result(center, revealed)

    def handle_move_result(self, taken_move, capture_square, was_illegal) -> None:
        self._helper.handle_move_result(taken_move, capture_square, was_illegal)

    def _pick(self, logits: np.ndarray) -> int:
        if self.mode == "argmax":
            return argmax_action(logits)
        return sample_action(logits, self.temperature, self.rng)

    def choose_sense(self) -> int:
        stack = self.hist.encode_stack(PRE_SENSE)
        sense_logits, _, _ = self.net.evaluate_np(stack[None])
        return self._pick(sense_logits[0])

    def choose_move(self) -> Move:
        stack = self.hist.encode_stack(PRE_MOVE)
        _, move_logits, _ = self.net.evaluate_np(stack[None])
        logits = move_logits[0]
        if self.mask_illegal:
            allowed = [encode_move_index(m) for m in self._helper.own_view_moves()]
            allowed.append(len(logits) - 1)  # pass stays available
            masked = np.full_like(logits, -np.inf)
            masked[allowed] = logits[allowed]
            logits = masked
        index = self._pick(logits)
        try:
            return decode_move_index(index, self.color,
                                     self.hist.own_bitboards()[eng.PAWN])
        except EncodingError:
            return eng.NULL_MOVE  # off-board index: an always-illegal request


@dataclass(frozen=True)
class BotSpec:
    kind: str  # "random" | "greedy" | "net"
    checkpoint: Optional[str] = None
    mode: str = "argmax"
    temperature: float = 1.0
    mask_illegal: bool = False

    def __post_init__(self):
        if self.kind not in ("random", "greedy", "net"):
            raise ValueError(f"unknown bot kind {self.kind!r}")
        if self.kind == "net" and self.checkpoint is None:
            raise ValueError("net bot needs a checkpoint path")

    @property
    def name(self) -> str:
        if self.kind != "net":
            return self.kind
        return f"net:{self.checkpoint}:{self.mode}"


def build_bot(spec: BotSpec, rng: np.random.Generator, net_cache: Optional[dict] = None) -> Player:
    if spec.kind == "random":
        return RandomBot(rng)
    if spec.kind == "greedy":
        return GreedyBot(rng)
    from .net import load_checkpoint, net_from_checkpoint
    if net_cache is not None and spec.checkpoint in net_cache:
        net = net_cache[spec.checkpoint]
    else:
        net = net_from_checkpoint(load_checkpoint(spec.checkpoint))
        if net_cache is not None:
            net_cache[spec.checkpoint] = net
    return NetBot(net, mode=spec.mode, temperature=spec.temperature,
                  rng=rng, mask_illegal=spec.mask_illegal)
