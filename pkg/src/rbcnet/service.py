"""Game service: JSON endpoints over per-seat observation streams.

Sessions wrap a GameDriver; every payload a seat receives before game_over
is computed from that seat's own stream (capture notices, its sense and
move results, its own pieces). Ground truth appears exactly once, in the
game_over event. Bot seats are driven by the server inside the session
lock; finished games are appended to a JSON Lines store and re-served
byte-identically.

Endpoints (all payloads wrapped in {protocol_version, type, game_id,
payload}): POST /games, POST /games/{id}/join, GET /games/{id}/state,
POST /games/{id}/sense, POST /games/{id}/move, GET /games/{id}/replay,
GET /games. Unknown request fields are ignored.
"""

from __future__ import annotations

import asyncio
import datetime as dt
import json
import uuid
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import engine as eng
from .bots import BotSpec, build_bot
from .engine import BLACK, WHITE, Move
from .records import record_to_line
from .runner import GameDriver, MOVE_PHASE, SENSE_PHASE

PROTOCOL_VERSION = 1
LONG_POLL_TIMEOUT_S = 20.0

_COLOR_NAMES = {WHITE: "white", BLACK: "black"}
_NAME_COLORS = {"white": WHITE, "black": BLACK}


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _wire(msg_type: str, game_id: Optional[str], payload: dict) -> dict:
    return {"protocol_version": PROTOCOL_VERSION, "type": msg_type,
            "game_id": game_id, "payload": payload}


class Seat:
    def __init__(self, color: int, spec: dict, rng: np.random.Generator, net_cache: dict):
        self.color = color
        self.kind = spec.get("kind", "human")
        self.events: list = []
        self.token: Optional[str] = None
        self.player = None
        if self.kind == "human":
            if not spec.get("open", False):
                self.token = uuid.uuid4().hex
        elif self.kind in ("random", "greedy", "net"):
            bot_spec = BotSpec(
                kind=self.kind,
                checkpoint=spec.get("checkpoint"),
                mode=spec.get("mode", "argmax"),
                temperature=spec.get("temperature", 1.0),
                mask_illegal=spec.get("mask_illegal", False),
            )
            self.player = build_bot(bot_spec, rng, net_cache)
            self.player.handle_game_start(color)
        else:
            raise ServiceError(400, "bad_seat", f"unknown seat kind {self.kind!r}")

    @property
    def is_bot(self) -> bool:
        return self.player is not None

    def describe(self) -> dict:
        return {"kind": self.kind, "claimed": self.is_bot or self.token is not None}


class GameSession:
    def __init__(self, game_id: str, config: dict, net_cache: dict):
        seed = config.get("seed")
        turn_cap = config.get("turn_cap", eng.TURN_CAP)
        if not isinstance(turn_cap, int) or turn_cap < 1:
            raise ServiceError(400, "bad_config", "turn_cap must be a positive integer")
        streams = np.random.SeedSequence(
            entropy=seed if seed is not None else uuid.uuid4().int).spawn(2)
        self.seats = {}
        for color, name in _COLOR_NAMES.items():
            spec = config.get(name, {"kind": "human"})
            if not isinstance(spec, dict):
                raise ServiceError(400, "bad_config", f"{name} seat spec must be an object")
            self.seats[color] = Seat(color, spec, np.random.default_rng(streams[color]),
                                     net_cache)
        names = tuple(self.seats[c].kind for c in (WHITE, BLACK))
        self.driver = GameDriver(turn_cap=turn_cap, game_id=game_id, names=names, seed=seed)
        self.lock = asyncio.Lock()
        self.changed = asyncio.Condition()
        self.version = 0
        self.stored_line: Optional[str] = None

    # -- helpers -----------------------------------------------------------

    def seat_for_token(self, token: Optional[str]) -> Seat:
        for seat in self.seats.values():
            if seat.token is not None and seat.token == token:
                return seat
        raise ServiceError(403, "bad_token", "unknown or missing seat token")

    def phase_name(self) -> str:
        if self.driver.result is not None:
            return "finished"
        return "awaiting_sense" if self.driver.phase == SENSE_PHASE else "awaiting_move"

    def _push(self, color: int, event: dict) -> None:
        self.seats[color].events.append(event)
        self.version += 1

    def _turn_number(self, color: int) -> int:
        return len(self.driver.record.turns[color]) + 1

    def _open_turn(self) -> None:
        """Open the current player's turn and emit their turn_start event."""
        if self.driver.result is None and not self.driver._turn_open:
            color = self.driver.to_act
            notice = self.driver.begin_turn()
            if self.seats[color].is_bot:
                self.seats[color].player.handle_opponent_capture(notice)
            self._push(color, {"type": "turn_start", "turn": self._turn_number(color),
                               "opp_capture": None if notice is None
                               else eng.square_name(notice)})

    def _finish(self) -> None:
        result = self.driver.result
        payload = {
            "result": {"winner": None if result.winner is None
                       else _COLOR_NAMES[result.winner],
                       "reason": result.reason},
            "ground_truth_fen": eng.to_fen(self.driver.state),
            "record": json.loads(record_to_line(self.driver.record)),
        }
        for color in (WHITE, BLACK):
            if self.seats[color].is_bot:
                self.seats[color].player.handle_game_end(result)
            self._push(color, {"type": "game_over", **payload})
        self.stored_line = record_to_line(self.driver.record)

    def advance_bots(self) -> None:
        """Play bot turns until a human must act or the game ends."""
        while self.driver.result is None:
            self._open_turn()
            color = self.driver.to_act
            seat = self.seats[color]
            if not seat.is_bot:
                return
            center = seat.player.choose_sense()
            sense = self.driver.apply_sense(center)
            seat.player.handle_sense_result(center, sense.revealed)
            move = seat.player.choose_move()
            outcome = self.driver.apply_move(move)
            seat.player.handle_move_result(outcome.taken_move, outcome.capture_square,
                                           outcome.was_illegal)
        if self.stored_line is None:
            self._finish()

    def submit_sense(self, seat: Seat, center: int) -> dict:
        if self.driver.result is not None:
            raise ServiceError(409, "game_over", "the game is finished")
        if self.driver.to_act != seat.color or self.driver.phase != SENSE_PHASE:
            raise ServiceError(409, "out_of_turn", "not your sense phase")
        self._open_turn()
        outcome = self.driver.apply_sense(center)
        event = {"type": "sense_result", "turn": self._turn_number(seat.color),
                 "center": eng.square_name(center),
                 "squares": [[eng.square_name(sq), _piece_char(piece)]
                             for sq, piece in outcome.revealed]}
        self._push(seat.color, event)
        return event

    def submit_move(self, seat: Seat, move: Move) -> dict:
        if self.driver.result is not None:
            raise ServiceError(409, "game_over", "the game is finished")
        if self.driver.to_act != seat.color or self.driver.phase != MOVE_PHASE:
            raise ServiceError(409, "out_of_turn", "not your move phase")
        outcome = self.driver.apply_move(move)
        event = {"type": "move_result", "turn": self._turn_number(seat.color),
                 "requested": move.uci(),
                 "taken": None if outcome.taken_move is None else outcome.taken_move.uci(),
                 "capture_square": None if outcome.capture_square is None
                 else eng.square_name(outcome.capture_square),
                 "was_illegal": outcome.was_illegal}
        self._push(seat.color, event)
        if self.driver.result is not None:
            self._finish()
        else:
            self.advance_bots()
        return event

    def state_payload(self, seat: Optional[Seat]) -> dict:
        payload = {
            "phase": self.phase_name(),
            "to_act": None if self.driver.result is not None
            else _COLOR_NAMES[self.driver.to_act],
            "seats": {_COLOR_NAMES[c]: s.describe() for c, s in self.seats.items()},
            "version": self.version,
        }
        if self.driver.result is not None:
            payload["result"] = {
                "winner": None if self.driver.result.winner is None
                else _COLOR_NAMES[self.driver.result.winner],
                "reason": self.driver.result.reason}
        if seat is not None:
            payload["your_color"] = _COLOR_NAMES[seat.color]
            payload["your_turn"] = (self.driver.result is None
                                    and self.driver.to_act == seat.color)
            payload["turn"] = self._turn_number(seat.color)
            payload["events"] = seat.events
            payload["own_pieces"] = {
                eng.PIECE_CHARS[k]: [eng.square_name(sq) for sq in range(64)
                                     if (self.driver.state.piece_bb(seat.color, k) >> sq) & 1]
                for k in range(6)}
        return payload


def _piece_char(piece) -> Optional[str]:
    if piece is None:
        return None
    ch = eng.PIECE_CHARS[piece[1]]
    return ch if piece[0] == WHITE else ch.lower()


class GameStore:
    """Append-only JSONL persistence with a JSON index, one file per day."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.data_dir / "index.json"
        self.index = {}
        if self.index_path.exists():
            self.index = json.loads(self.index_path.read_text())

    def save(self, game_id: str, line: str) -> None:
        if game_id in self.index:
            return
        filename = f"games-{dt.date.today():%Y%m%d}.jsonl"
        path = self.data_dir / filename
        with open(path, "a", encoding="utf-8") as fh:
            offset = fh.tell()
            fh.write(line + "\n")
        self.index[game_id] = {"file": filename, "offset": offset}
        self.index_path.write_text(json.dumps(self.index, indent=0, sort_keys=True))

    def fetch(self, game_id: str) -> Optional[str]:
        entry = self.index.get(game_id)
        if entry is None:
            return None
        with open(self.data_dir / entry["file"], "r", encoding="utf-8") as fh:
            fh.seek(entry["offset"])
            return fh.readline().rstrip("\n")

    def list_ids(self) -> list:
        return sorted(self.index)


def create_app(data_dir, max_games: int = 256) -> FastAPI:
    app = FastAPI(title="rbcnet game service")
    sessions: dict = {}
    store = GameStore(data_dir)
    net_cache: dict = {}

    def get_session(game_id: str) -> GameSession:
        session = sessions.get(game_id)
        if session is None:
            raise ServiceError(404, "unknown_game", f"no live game {game_id!r}")
        return session

    @app.exception_handler(ServiceError)
    async def on_service_error(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status,
            content=_wire("error", request.path_params.get("game_id"),
                          {"code": exc.code, "message": exc.message}))

    async def notify(session: GameSession):
        async with session.changed:
            session.changed.notify_all()

    @app.post("/games")
    async def create_game(request: Request):
        if len(sessions) >= max_games:
            raise ServiceError(503, "too_many_games", "game limit reached")
        config = await request.json()
        game_id = uuid.uuid4().hex[:12]
        session = GameSession(game_id, config, net_cache)
        sessions[game_id] = session
        async with session.lock:
            session.advance_bots()
            if session.stored_line is not None:
                store.save(game_id, session.stored_line)
        await notify(session)
        payload = {"seats": {}, "phase": session.phase_name()}
        for color, name in _COLOR_NAMES.items():
            seat = session.seats[color]
            desc = seat.describe()
            if seat.token is not None:
                desc["token"] = seat.token
            payload["seats"][name] = desc
        return _wire("create", game_id, payload)

    @app.post("/games/{game_id}/join")
    async def join_game(game_id: str, request: Request):
        body = await request.json()
        session = get_session(game_id)
        color = _NAME_COLORS.get(body.get("seat"))
        if color is None:
            raise ServiceError(400, "bad_seat", "seat must be 'white' or 'black'")
        async with session.lock:
            seat = session.seats[color]
            if seat.is_bot or seat.token is not None:
                raise ServiceError(409, "seat_taken", f"{body['seat']} is already taken")
            seat.token = uuid.uuid4().hex
        return _wire("join", game_id, {"seat": body["seat"], "token": seat.token})

    @app.get("/games/{game_id}/state")
    async def game_state(game_id: str, token: Optional[str] = None, wait: int = 0,
                         version: int = -1):
        session = get_session(game_id)
        seat = session.seat_for_token(token) if token is not None else None
        if wait and seat is not None:
            deadline = asyncio.get_event_loop().time() + LONG_POLL_TIMEOUT_S
            while (session.version <= version and session.driver.result is None
                   and not (session.driver.to_act == seat.color)):
                remaining = deadline - asyncio.get_event_loop().time()
                if remaining <= 0:
                    break
                try:
                    async with session.changed:
                        await asyncio.wait_for(session.changed.wait(), timeout=remaining)
                except asyncio.TimeoutError:
                    break
        async with session.lock:
            payload = session.state_payload(seat)
        return _wire("state", game_id, payload)

    @app.post("/games/{game_id}/sense")
    async def submit_sense(game_id: str, request: Request):
        body = await request.json()
        session = get_session(game_id)
        seat = session.seat_for_token(body.get("token"))
        try:
            center = eng.parse_square(body.get("square", ""))
        except (ValueError, TypeError) as exc:
            raise ServiceError(400, "bad_square", str(exc))
        async with session.lock:
            event = session.submit_sense(seat, center)
        await notify(session)
        return _wire("sense_result", game_id, event)

    @app.post("/games/{game_id}/move")
    async def submit_move(game_id: str, request: Request):
        body = await request.json()
        session = get_session(game_id)
        seat = session.seat_for_token(body.get("token"))
        try:
            move = Move.from_uci(body.get("move", ""))
        except (ValueError, TypeError) as exc:
            raise ServiceError(400, "bad_move", str(exc))
        async with session.lock:
            try:
                event = session.submit_move(seat, move)
            except eng.MalformedMoveError as exc:
                raise ServiceError(400, "bad_move", str(exc))
            if session.stored_line is not None:
                store.save(game_id, session.stored_line)
        await notify(session)
        return _wire("move_result", game_id, event)

    @app.get("/games/{game_id}/replay")
    async def replay(game_id: str, token: Optional[str] = None):
        stored = store.fetch(game_id)
        if stored is not None:
            return Response(content=stored, media_type="application/json")
        session = sessions.get(game_id)
        if session is None:
            raise ServiceError(404, "unknown_game", f"no record of game {game_id!r}")
        if session.stored_line is not None:
            return Response(content=session.stored_line, media_type="application/json")
        seat = session.seat_for_token(token)  # 403 without a valid token
        async with session.lock:
            payload = {"your_color": _COLOR_NAMES[seat.color], "events": seat.events}
        return _wire("partial_replay", game_id, payload)

    @app.get("/games")
    async def list_games():
        live = [{"game_id": gid, "phase": s.phase_name(),
                 "seats": {_COLOR_NAMES[c]: seat.kind for c, seat in s.seats.items()}}
                for gid, s in sessions.items()]
        return _wire("list", None, {"live": live, "stored": store.list_ids()})

    app.state.sessions = sessions
    app.state.store = store
    return app
