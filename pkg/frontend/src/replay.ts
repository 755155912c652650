// Replay reconstruction from a stored game record.
//
// A "ply" is one side's complete turn (sense + move), white first. The
// perspective view at ply k is rebuilt by folding that seat's recorded
// turns through the same reducer the live client uses; the ground-truth
// overlay replays both sides' taken moves on a full board and is only
// offered for finished games.

import type { Color, GameRecord, PieceChar, RecordTurn, SeatEvent } from './types.js';
import { parseSquare, squareName } from './types.js';
import { applyEvent, emptyView, type ClientGameView } from './state.js';

const START_ROW: Array<[string, string]> = [
  ['a', 'R'], ['b', 'N'], ['c', 'B'], ['d', 'Q'],
  ['e', 'K'], ['f', 'B'], ['g', 'N'], ['h', 'R'],
];

export function initialBoard(): Map<string, PieceChar> {
  const board = new Map<string, PieceChar>();
  for (const [file, piece] of START_ROW) {
    board.set(`${file}1`, piece as PieceChar);
    board.set(`${file}2`, 'P');
    board.set(`${file}7`, 'p');
    board.set(`${file}8`, piece.toLowerCase() as PieceChar);
  }
  return board;
}

/** Apply one side's taken move (with the referee's capture square). */
export function applyTakenMove(board: Map<string, PieceChar>, turn: RecordTurn): void {
  if (turn.capture_square) board.delete(turn.capture_square);
  const taken = turn.taken_move;
  if (!taken || taken === 'pass' || turn.was_illegal) return;
  const from = taken.slice(0, 2);
  const to = taken.slice(2, 4);
  const promo = taken.length > 4 ? taken[4] : null;
  const piece = board.get(from);
  if (!piece) return;
  board.delete(from);
  if (promo) {
    board.set(to, (piece === piece.toUpperCase()
      ? promo.toUpperCase() : promo.toLowerCase()) as PieceChar);
  } else {
    board.set(to, piece);
  }
  // Castling: the king's two-step drags the rook over.
  if (piece.toUpperCase() === 'K') {
    const fromFile = parseSquare(from).file;
    const toFile = parseSquare(to).file;
    const rank = from[1];
    if (toFile - fromFile === 2) {
      const rook = board.get(`h${rank}`);
      if (rook) { board.delete(`h${rank}`); board.set(`f${rank}`, rook); }
    } else if (fromFile - toFile === 2) {
      const rook = board.get(`a${rank}`);
      if (rook) { board.delete(`a${rank}`); board.set(`d${rank}`, rook); }
    }
  }
}

/** Interleaved [color, turn] sequence: white turn 1, black turn 1, ... */
export function plySequence(record: GameRecord): Array<[Color, RecordTurn]> {
  const sequence: Array<[Color, RecordTurn]> = [];
  const white = record.white.turns;
  const black = record.black.turns;
  for (let i = 0; i < Math.max(white.length, black.length); i++) {
    if (i < white.length) sequence.push(['white', white[i]]);
    if (i < black.length) sequence.push(['black', black[i]]);
  }
  return sequence;
}

function toEvents(turn: RecordTurn, turnNumber: number): SeatEvent[] {
  return [
    { type: 'turn_start', turn: turnNumber, opp_capture: turn.opp_capture },
    { type: 'sense_result', turn: turnNumber, center: turn.sense,
      squares: turn.sense_result },
    { type: 'move_result', turn: turnNumber, requested: turn.requested_move,
      taken: turn.taken_move, capture_square: turn.capture_square,
      was_illegal: turn.was_illegal },
  ];
}

export class ReplayController {
  record: GameRecord;
  perspective: Color = 'white';
  showTruth = false;
  ply = 0;

  constructor(record: GameRecord) {
    this.record = record;
    this.ply = this.totalPlies();
  }

  totalPlies(): number {
    return this.record.white.turns.length + this.record.black.turns.length;
  }

  /** Ground truth may only be overlaid once the game is finished. */
  truthAvailable(): boolean {
    return this.record.result !== null;
  }

  /** Perspective seat's view after the first `ply` plies. */
  viewAt(ply: number = this.ply): ClientGameView {
    const view = emptyView(this.perspective);
    this.trackOwn(ply, view);
    let turnNumber = 0;
    for (const [color, turn] of plySequence(this.record).slice(0, ply)) {
      if (color !== this.perspective) continue;
      turnNumber += 1;
      for (const event of toEvents(turn, turnNumber)) applyEvent(view, event);
    }
    if (ply >= this.totalPlies() && this.record.result) {
      view.phase = 'finished';
      view.result = this.record.result;
    }
    return view;
  }

  /** Event-derived own pieces for the perspective seat after `ply` plies. */
  private trackOwn(ply: number, view: ClientGameView): void {
    const board = initialBoard();
    const mine = (piece: PieceChar) =>
      (piece === piece.toUpperCase()) === (this.perspective === 'white');
    for (const [color, turn] of plySequence(this.record).slice(0, ply)) {
      if (color === this.perspective) {
        applyTakenMove(board, turn);
      } else if (turn.capture_square) {
        board.delete(turn.capture_square);
      }
    }
    view.ownPieces.clear();
    for (const [sq, piece] of board) {
      if (mine(piece)) view.ownPieces.set(sq, piece);
    }
  }

  /** Full board after the first `ply` plies (finished games only). */
  truthAt(ply: number = this.ply): Map<string, PieceChar> {
    const board = initialBoard();
    for (const [, turn] of plySequence(this.record).slice(0, ply)) {
      applyTakenMove(board, turn);
    }
    return board;
  }

  /** Sense annotation of the ply currently under the slider, if any. */
  senseAt(ply: number = this.ply): { color: Color; center: string } | null {
    if (ply === 0) return null;
    const [color, turn] = plySequence(this.record)[ply - 1];
    return { color, center: turn.sense };
  }
}

export function describePly(record: GameRecord, ply: number): string {
  if (ply === 0) return 'start';
  const [color, turn] = plySequence(record)[ply - 1];
  const move = turn.was_illegal ? `${turn.requested_move} (illegal)`
    : turn.taken_move ?? 'pass';
  return `${Math.ceil(ply / 2)}${color === 'white' ? '.' : '...'} ` +
    `sense ${turn.sense}, ${move}`;
}

export function squareNameAt(file: number, rank: number): string {
  return squareName(file, rank);
}
