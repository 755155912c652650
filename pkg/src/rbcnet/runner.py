"""Referee-side game driving.

``GameDriver`` is a stepwise state machine over one game: it owns the
hidden ground state, enforces the sense-then-move turn structure, builds
the GameRecord, and hands each player only observation-typed values. Both
the synchronous ``play_game`` loop and the batched self-play collector in
the RL trainer run on top of it, so there is exactly one implementation of
the information flow to audit for fog-of-war leaks.

Players implement the ``Player`` interface and never see a GroundState.
"""

from __future__ import annotations

import uuid
from typing import Optional

from . import engine as eng
from .engine import BLACK, WHITE, GameResult, Move, MoveOutcome
from .records import GameRecord, TurnRecord

SENSE_PHASE = "sense"
MOVE_PHASE = "move"


class Player:
    """One seat's event interface. Everything a player may legally know
    arrives through these callbacks; the referee state stays on the other
    side of the fence."""

    def handle_game_start(self, color: int) -> None:
        pass

    def handle_opponent_capture(self, square: Optional[int]) -> None:
        """Start of own turn: square where the opponent captured our piece."""

    def choose_sense(self) -> int:
        raise NotImplementedError

    def handle_sense_result(self, center: int, revealed) -> None:
        pass

    def choose_move(self) -> Move:
        raise NotImplementedError

    def handle_move_result(self, taken_move: Optional[Move], capture_square: Optional[int],
                           was_illegal: bool) -> None:
        pass

    def handle_game_end(self, result: GameResult) -> None:
        pass


class GameDriver:
    """One game, stepped from outside.

    Cycle per turn of the side to move: ``begin_turn()`` -> ``apply_sense``
    -> ``apply_move``; ``result`` becomes non-None when the game ends.
    """

    def __init__(self, turn_cap: int = eng.TURN_CAP, game_id: Optional[str] = None,
                 names=("white", "black"), seed: Optional[int] = None):
        self.state = eng.initial_state()
        self.turn_cap = turn_cap
        self.phase = SENSE_PHASE
        self.result: Optional[GameResult] = None
        self._pending_notice = {WHITE: None, BLACK: None}
        self._turn_open = False
        self.record = GameRecord(
            game_id=game_id or uuid.uuid4().hex,
            names={WHITE: names[0], BLACK: names[1]},
            seed=seed,
            turn_cap=turn_cap,
        )
        self._current: Optional[TurnRecord] = None

    @property
    def to_act(self) -> int:
        return self.state.side_to_move

    def begin_turn(self) -> Optional[int]:
        """Open the turn of the side to move; returns their capture notice."""
        if self.result is not None:
            raise eng.GameOverError("game is over")
        if self._turn_open:
            raise eng.EngineError("turn already open")
        self._turn_open = True
        notice = self._pending_notice[self.to_act]
        self._pending_notice[self.to_act] = None
        self._current = TurnRecord(
            opp_capture=notice, sense=-1, sense_result=(),
            requested_move=eng.PASS, taken_move=None, capture_square=None, was_illegal=False)
        return notice

    def apply_sense(self, center: int):
        if not self._turn_open or self.phase != SENSE_PHASE:
            raise eng.EngineError(f"not awaiting a sense (phase={self.phase})")
        outcome = eng.apply_sense(self.state, center)
        self._current.sense = center
        self._current.sense_result = outcome.revealed
        self.phase = MOVE_PHASE
        return outcome

    def apply_move(self, requested: Move) -> MoveOutcome:
        if not self._turn_open or self.phase != MOVE_PHASE:
            raise eng.EngineError(f"not awaiting a move (phase={self.phase})")
        color = self.to_act
        self.state, outcome = eng.request_move(self.state, requested)
        self._current.requested_move = requested
        self._current.taken_move = outcome.taken_move
        self._current.capture_square = outcome.capture_square
        self._current.was_illegal = outcome.was_illegal
        self.record.turns[color].append(self._current)
        self._current = None
        self._turn_open = False
        self.phase = SENSE_PHASE
        self._pending_notice[eng.opponent(color)] = outcome.capture_square
        self.result = eng.is_terminal(self.state, self.turn_cap)
        if self.result is not None:
            self.state = eng.with_result(self.state, self.result) \
                if self.state.result is None else self.state
            self.record.result = self.result
        return outcome


def play_game(white: Player, black: Player, turn_cap: int = eng.TURN_CAP,
              game_id: Optional[str] = None, names=("white", "black"),
              seed: Optional[int] = None, max_plies: Optional[int] = None):
    """Run a full game between two players. Returns (GameRecord, GameResult)."""
    driver = GameDriver(turn_cap=turn_cap, game_id=game_id, names=names, seed=seed)
    players = {WHITE: white, BLACK: black}
    white.handle_game_start(WHITE)
    black.handle_game_start(BLACK)
    plies = 0
    while driver.result is None:
        player = players[driver.to_act]
        notice = driver.begin_turn()
        player.handle_opponent_capture(notice)
        center = player.choose_sense()
        sense_outcome = driver.apply_sense(center)
        player.handle_sense_result(center, sense_outcome.revealed)
        move = player.choose_move()
        outcome = driver.apply_move(move)
        player.handle_move_result(outcome.taken_move, outcome.capture_square,
                                  outcome.was_illegal)
        plies += 1
        if max_plies is not None and plies >= max_plies and driver.result is None:
            raise eng.EngineError(f"game exceeded {max_plies} plies")
    white.handle_game_end(driver.result)
    black.handle_game_end(driver.result)
    return driver.record, driver.result
