"""Head-to-head matches between bots and relative-strength reporting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as eng
from .bots import BotSpec, build_bot
from .engine import BLACK, WHITE
from .runner import play_game


def wilson_interval(score: float, n: int, z: float = 1.96):
    """95% Wilson interval for a score rate in [0, 1] over n games."""
    if n <= 0:
        raise ValueError("need at least one game")
    p = score
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    margin = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - margin), min(1.0, center + margin)


def relative_elo(win_rate: float) -> float:
    """Rating difference implied by a win rate; antisymmetric around 0.5."""
    if not 0.0 < win_rate < 1.0:
        raise ValueError("win rate must be strictly between 0 and 1; "
                         "report the interval endpoints instead")
    return 400.0 * math.log10(win_rate / (1.0 - win_rate))


@dataclass
class MatchResult:
    bot_a: str
    bot_b: str
    games: int
    wins: int = 0
    draws: int = 0
    losses: int = 0
    by_color: dict = field(default_factory=lambda: {
        "white": {"games": 0, "wins": 0, "draws": 0, "losses": 0},
        "black": {"games": 0, "wins": 0, "draws": 0, "losses": 0},
    })
    total_plies: int = 0

    @property
    def score(self) -> float:
        return (self.wins + 0.5 * self.draws) / self.games

    @property
    def mean_game_length(self) -> float:
        return self.total_plies / self.games

    def wilson(self):
        return wilson_interval(self.score, self.games)

    def to_json(self) -> dict:
        low, high = self.wilson()
        data = {
            "bot_a": self.bot_a,
            "bot_b": self.bot_b,
            "games": self.games,
            "wins": self.wins,
            "draws": self.draws,
            "losses": self.losses,
            "score": self.score,
            "wilson_95": [low, high],
            "by_color": self.by_color,
            "mean_game_length_plies": self.mean_game_length,
        }
        if 0.0 < self.score < 1.0:
            data["relative_elo"] = relative_elo(self.score)
            data["relative_elo_95"] = [
                relative_elo(low) if low > 0 else None,
                relative_elo(high) if high < 1 else None,
            ]
        return data

    def format_table(self) -> str:
        low, high = self.wilson()
        lines = [
            f"{self.bot_a} vs {self.bot_b}: {self.games} games",
            f"  W/D/L       : {self.wins}/{self.draws}/{self.losses}",
            f"  score       : {self.score:.3f}  (95% Wilson {low:.3f}..{high:.3f})",
            f"  mean length : {self.mean_game_length:.1f} plies",
        ]
        for color in ("white", "black"):
            c = self.by_color[color]
            lines.append(f"  as {color:5s}    : {c['wins']}/{c['draws']}/{c['losses']} "
                         f"over {c['games']}")
        if 0.0 < self.score < 1.0:
            lines.append(f"  relative elo: {relative_elo(self.score):+.1f}")
        return "\n".join(lines)


def run_match(a: BotSpec, b: BotSpec, games: int, seed: int,
              turn_cap: int = eng.TURN_CAP) -> MatchResult:
    """Play a color-balanced match. Deterministic for a fixed seed.

    Game i gives A the white pieces iff i is even; every game draws its own
    rng streams from (seed, i), so results do not depend on scheduling and
    are reduced in game order.
    """
    if games < 2 or games % 2:
        raise ValueError("games must be even and >= 2 for color balance")
    result = MatchResult(bot_a=a.name, bot_b=b.name, games=games)
    net_cache: dict = {}
    for i in range(games):
        streams = np.random.SeedSequence(entropy=(seed, i)).spawn(2)
        bot_a = build_bot(a, np.random.default_rng(streams[0]), net_cache)
        bot_b = build_bot(b, np.random.default_rng(streams[1]), net_cache)
        a_color = WHITE if i % 2 == 0 else BLACK
        white, black = (bot_a, bot_b) if a_color == WHITE else (bot_b, bot_a)
        record, game_result = play_game(
            white, black, turn_cap=turn_cap,
            game_id=f"match-{seed}-{i}", names=(
                a.name if a_color == WHITE else b.name,
                b.name if a_color == WHITE else a.name),
            seed=i)
        score = game_result.score_for(a_color)
        bucket = result.by_color["white" if a_color == WHITE else "black"]
        bucket["games"] += 1
        if score == 1.0:
            result.wins += 1
            bucket["wins"] += 1
        elif score == 0.5:
            result.draws += 1
            bucket["draws"] += 1
        else:
            result.losses += 1
            bucket["losses"] += 1
        result.total_plies += len(record.turns[WHITE]) + len(record.turns[BLACK])
    return result
