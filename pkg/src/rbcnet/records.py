"""Game records: the JSON Lines format shared by data generation, training
ingest, and the game service, plus referee replay validation.

One game per line. Schema (also shipped as schemas/game_record.schema.json):

    {"id": ..., "white": {"name": ..., "turns": [...]},
     "black": {"name": ..., "turns": [...]},
     "result": {"winner": "white"|"black"|null, "reason": ...},
     "meta": {"seed": ..., "turn_cap": ...}}

A turn entry holds exactly what that player saw: {opp_capture, sense,
sense_result, requested_move, taken_move, capture_square, was_illegal}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from . import engine as eng
from .engine import BLACK, WHITE, GameResult, Move


class RecordError(Exception):
    """A record failed schema parsing or referee replay."""


@dataclass
class TurnRecord:
    opp_capture: Optional[int]
    sense: int
    sense_result: tuple  # of (square, Optional[(color, kind)])
    requested_move: Move
    taken_move: Optional[Move]
    capture_square: Optional[int]
    was_illegal: bool


@dataclass
class GameRecord:
    game_id: str
    names: dict  # color -> display name
    turns: dict = field(default_factory=lambda: {WHITE: [], BLACK: []})
    result: Optional[GameResult] = None
    seed: Optional[int] = None
    turn_cap: int = eng.TURN_CAP

    def value_target(self, color: int) -> int:
        if self.result is None or self.result.winner is None:
            return 0
        return 1 if self.result.winner == color else -1


def _piece_to_char(piece) -> Optional[str]:
    if piece is None:
        return None
    ch = eng.PIECE_CHARS[piece[1]]
    return ch if piece[0] == WHITE else ch.lower()


def _char_to_piece(ch):
    if ch is None:
        return None
    return (WHITE if ch.isupper() else BLACK, eng.PIECE_CHARS.index(ch.upper()))


def _sq(square: Optional[int]) -> Optional[str]:
    return None if square is None else eng.square_name(square)


def _unsq(name: Optional[str]) -> Optional[int]:
    return None if name is None else eng.parse_square(name)


def turn_to_json(turn: TurnRecord) -> dict:
    return {
        "opp_capture": _sq(turn.opp_capture),
        "sense": _sq(turn.sense),
        "sense_result": [[_sq(sq), _piece_to_char(piece)] for sq, piece in turn.sense_result],
        "requested_move": turn.requested_move.uci(),
        "taken_move": None if turn.taken_move is None else turn.taken_move.uci(),
        "capture_square": _sq(turn.capture_square),
        "was_illegal": turn.was_illegal,
    }


def turn_from_json(data: dict) -> TurnRecord:
    return TurnRecord(
        opp_capture=_unsq(data["opp_capture"]),
        sense=_unsq(data["sense"]),
        sense_result=tuple((_unsq(sq), _char_to_piece(piece))
                           for sq, piece in data["sense_result"]),
        requested_move=Move.from_uci(data["requested_move"]),
        taken_move=None if data["taken_move"] is None else Move.from_uci(data["taken_move"]),
        capture_square=_unsq(data["capture_square"]),
        was_illegal=data["was_illegal"],
    )


def record_to_json(record: GameRecord) -> dict:
    if record.result is None:
        result = None
    else:
        winner = (None if record.result.winner is None
                  else ("white" if record.result.winner == WHITE else "black"))
        result = {"winner": winner, "reason": record.result.reason}
    return {
        "id": record.game_id,
        "white": {"name": record.names[WHITE],
                  "turns": [turn_to_json(t) for t in record.turns[WHITE]]},
        "black": {"name": record.names[BLACK],
                  "turns": [turn_to_json(t) for t in record.turns[BLACK]]},
        "result": result,
        "meta": {"seed": record.seed, "turn_cap": record.turn_cap},
    }


def record_from_json(data: dict) -> GameRecord:
    try:
        result = None
        if data["result"] is not None:
            winner_name = data["result"]["winner"]
            winner = None if winner_name is None else (WHITE if winner_name == "white" else BLACK)
            result = GameResult(winner=winner, reason=data["result"]["reason"])
        return GameRecord(
            game_id=str(data["id"]),
            names={WHITE: data["white"].get("name", "white"),
                   BLACK: data["black"].get("name", "black")},
            turns={WHITE: [turn_from_json(t) for t in data["white"]["turns"]],
                   BLACK: [turn_from_json(t) for t in data["black"]["turns"]]},
            result=result,
            seed=data.get("meta", {}).get("seed"),
            turn_cap=data.get("meta", {}).get("turn_cap", eng.TURN_CAP),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise RecordError(f"malformed record: {exc}") from exc


def record_to_line(record: GameRecord) -> str:
    return json.dumps(record_to_json(record), separators=(",", ":"), sort_keys=True)


def write_jsonl(path, records) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_line(record))
            fh.write("\n")
            count += 1
    return count


def read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"line {line_no}: bad JSON: {exc}") from exc
            yield record_from_json(data)


def load_schema() -> dict:
    text = resources.files("rbcnet").joinpath("schemas/game_record.schema.json").read_text()
    return json.loads(text)


# ---------------------------------------------------------------------------
# Referee replay validation
# ---------------------------------------------------------------------------

def replay_errors(record: GameRecord) -> list:
    """Replay the record through the engine; return mismatch descriptions."""
    errors = []
    state = eng.initial_state()
    cursor = {WHITE: 0, BLACK: 0}
    expected_notice = {WHITE: None, BLACK: None}
    final = None
    while final is None:
        color = state.side_to_move
        label = "white" if color == WHITE else "black"
        turns = record.turns[color]
        if cursor[color] >= len(turns):
            errors.append(f"{label} record ends at turn {cursor[color]} before the game did")
            return errors
        turn = turns[cursor[color]]
        cursor[color] += 1
        prefix = f"{label} turn {cursor[color]}"
        if turn.opp_capture != expected_notice[color]:
            errors.append(f"{prefix}: capture notice {_sq(turn.opp_capture)} "
                          f"!= referee's {_sq(expected_notice[color])}")
        expected_notice[color] = None
        actual_sense = eng.apply_sense(state, turn.sense).revealed
        if tuple(turn.sense_result) != actual_sense:
            errors.append(f"{prefix}: sense result mismatch at {_sq(turn.sense)}")
        try:
            state, outcome = eng.request_move(state, turn.requested_move)
        except eng.EngineError as exc:
            errors.append(f"{prefix}: request {turn.requested_move.uci()} raised {exc}")
            return errors
        if (outcome.taken_move, outcome.capture_square, outcome.was_illegal) != (
                turn.taken_move, turn.capture_square, turn.was_illegal):
            errors.append(
                f"{prefix}: outcome mismatch for {turn.requested_move.uci()}: referee says "
                f"taken={outcome.taken_move and outcome.taken_move.uci()} "
                f"capture={_sq(outcome.capture_square)} illegal={outcome.was_illegal}")
        expected_notice[eng.opponent(color)] = outcome.capture_square
        final = eng.is_terminal(state, record.turn_cap)
        if errors:
            return errors
    for color, label in ((WHITE, "white"), (BLACK, "black")):
        if cursor[color] != len(record.turns[color]):
            errors.append(f"{label} has {len(record.turns[color]) - cursor[color]} "
                          "turns after the game ended")
    if record.result != final:
        errors.append(f"recorded result {record.result} != referee's {final}")
    return errors
