// Wire protocol types (mirrors the service's versioned JSON messages) and
// small board helpers shared by the view code.

export const PROTOCOL_VERSION = 1;

export type Color = 'white' | 'black';
export type PieceChar =
  | 'P' | 'N' | 'B' | 'R' | 'Q' | 'K'
  | 'p' | 'n' | 'b' | 'r' | 'q' | 'k';

export interface WireMessage<T = Record<string, unknown>> {
  protocol_version: number;
  type: string;
  game_id: string | null;
  payload: T;
}

export interface SeatInfo {
  kind: string;
  claimed: boolean;
  token?: string;
}

export interface CreatePayload {
  seats: Record<Color, SeatInfo>;
  phase: string;
}

export interface TurnStartEvent {
  type: 'turn_start';
  turn: number;
  opp_capture: string | null;
}

export interface SenseResultEvent {
  type: 'sense_result';
  turn: number;
  center: string;
  squares: Array<[string, PieceChar | null]>;
}

export interface MoveResultEvent {
  type: 'move_result';
  turn: number;
  requested: string;
  taken: string | null;
  capture_square: string | null;
  was_illegal: boolean;
}

export interface GameOverEvent {
  type: 'game_over';
  result: { winner: Color | null; reason: string };
  ground_truth_fen: string;
  record: GameRecord;
}

export type SeatEvent = TurnStartEvent | SenseResultEvent | MoveResultEvent | GameOverEvent;

export interface StatePayload {
  phase: 'awaiting_sense' | 'awaiting_move' | 'finished';
  to_act: Color | null;
  seats: Record<Color, SeatInfo>;
  version: number;
  result?: { winner: Color | null; reason: string };
  your_color?: Color;
  your_turn?: boolean;
  turn?: number;
  events?: SeatEvent[];
  own_pieces?: Record<string, string[]>;
}

export interface RecordTurn {
  opp_capture: string | null;
  sense: string;
  sense_result: Array<[string, PieceChar | null]>;
  requested_move: string;
  taken_move: string | null;
  capture_square: string | null;
  was_illegal: boolean;
}

export interface GameRecord {
  id: string;
  white: { name?: string; turns: RecordTurn[] };
  black: { name?: string; turns: RecordTurn[] };
  result: { winner: Color | null; reason: string } | null;
  meta: { seed?: number | null; turn_cap?: number };
}

// -- board helpers ----------------------------------------------------------

export const FILES = 'abcdefgh';

export function squareName(file: number, rank: number): string {
  return FILES[file] + String(rank + 1);
}

export function parseSquare(name: string): { file: number; rank: number } {
  return { file: FILES.indexOf(name[0]), rank: Number(name[1]) - 1 };
}

/** The 3x3 sense window around a center, clipped at the board edges. */
export function senseWindow(center: string): string[] {
  const { file, rank } = parseSquare(center);
  const out: string[] = [];
  for (let dr = -1; dr <= 1; dr++) {
    for (let df = -1; df <= 1; df++) {
      const f = file + df;
      const r = rank + dr;
      if (f >= 0 && f < 8 && r >= 0 && r < 8) out.push(squareName(f, r));
    }
  }
  return out;
}

export function isWhitePiece(piece: PieceChar): boolean {
  return piece === piece.toUpperCase();
}

export const PIECE_GLYPHS: Record<PieceChar, string> = {
  K: '♔', Q: '♕', R: '♖', B: '♗', N: '♘', P: '♙',
  k: '♚', q: '♛', r: '♜', b: '♝', n: '♞', p: '♟',
};
