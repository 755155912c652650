// Client-side game view, built exclusively from wire messages.
//
// The reducer consumes the seat's event stream plus state snapshots and
// produces everything the board renders. Opponent information exists here
// only as "remembered": squares seen in past sense windows, tagged with the
// turn they were seen on so the view can fade stale beliefs. Ground truth
// appears only after the game_over event.

import type {
  Color,
  GameRecord,
  PieceChar,
  SeatEvent,
  StatePayload,
} from './types.js';
import { isWhitePiece, senseWindow } from './types.js';

/** '?' marks a square where something captured us: occupant unknown. */
export type RememberedPiece = PieceChar | '?';

export interface Remembered {
  piece: RememberedPiece;
  seenTurn: number;
}

export interface FeedLine {
  turn: number;
  text: string;
}

export interface ClientGameView {
  color: Color;
  phase: 'awaiting_sense' | 'awaiting_move' | 'finished' | 'waiting';
  yourTurn: boolean;
  turn: number;
  ownPieces: Map<string, PieceChar>;
  /** Opponent pieces seen in sense windows, with the turn they were seen. */
  remembered: Map<string, Remembered>;
  /** Squares revealed by the latest sense (empties included). */
  lastSenseWindow: string[];
  lastSenseCenter: string | null;
  /** Squares where our pieces were captured / where we captured, latest turn. */
  oppCaptureMarker: string | null;
  myCaptureMarker: string | null;
  lastMoveIllegal: boolean;
  lastTakenMove: string | null;
  lastMoveTruncated: boolean;
  feed: FeedLine[];
  result: { winner: Color | null; reason: string } | null;
  groundTruthFen: string | null;
  record: GameRecord | null;
  eventsSeen: number;
}

export function emptyView(color: Color): ClientGameView {
  return {
    color,
    phase: 'waiting',
    yourTurn: false,
    turn: 0,
    ownPieces: new Map(),
    remembered: new Map(),
    lastSenseWindow: [],
    lastSenseCenter: null,
    oppCaptureMarker: null,
    myCaptureMarker: null,
    lastMoveIllegal: false,
    lastTakenMove: null,
    lastMoveTruncated: false,
    feed: [],
    result: null,
    groundTruthFen: null,
    record: null,
    eventsSeen: 0,
  };
}

function isOpponentPiece(view: ClientGameView, piece: PieceChar): boolean {
  return isWhitePiece(piece) !== (view.color === 'white');
}

function feed(view: ClientGameView, turn: number, text: string): void {
  view.feed.push({ turn, text });
}

export function applyEvent(view: ClientGameView, event: SeatEvent): void {
  switch (event.type) {
    case 'turn_start': {
      view.turn = event.turn;
      view.oppCaptureMarker = event.opp_capture;
      if (event.opp_capture) {
        view.remembered.set(event.opp_capture, { piece: '?', seenTurn: event.turn });
        feed(view, event.turn, `opponent captured our piece on ${event.opp_capture}`);
      }
      break;
    }
    case 'sense_result': {
      view.lastSenseCenter = event.center;
      view.lastSenseWindow = event.squares.map(([sq]) => sq);
      for (const [sq, piece] of event.squares) {
        if (piece !== null && isOpponentPiece(view, piece)) {
          view.remembered.set(sq, { piece, seenTurn: event.turn });
        } else {
          view.remembered.delete(sq);
        }
      }
      feed(view, event.turn, `sensed ${event.center}`);
      break;
    }
    case 'move_result': {
      view.lastMoveIllegal = event.was_illegal;
      view.lastTakenMove = event.taken;
      view.myCaptureMarker = event.capture_square;
      view.lastMoveTruncated =
        event.taken !== null && event.taken !== 'pass' && event.taken !== event.requested;
      if (event.was_illegal) {
        feed(view, event.turn, `move ${event.requested} was illegal (turn consumed)`);
      } else if (event.taken === 'pass') {
        feed(view, event.turn, 'passed');
      } else {
        let text = `played ${event.taken}`;
        if (view.lastMoveTruncated) text += ` (requested ${event.requested}, truncated)`;
        if (event.capture_square) text += `, captured on ${event.capture_square}`;
        feed(view, event.turn, text);
      }
      if (event.capture_square) view.remembered.delete(event.capture_square);
      if (event.taken && event.taken !== 'pass') {
        view.remembered.delete(event.taken.slice(2, 4));
      }
      break;
    }
    case 'game_over': {
      view.phase = 'finished';
      view.result = event.result;
      view.groundTruthFen = event.ground_truth_fen;
      view.record = event.record;
      feed(view, view.turn,
        event.result.winner === null
          ? `draw (${event.result.reason})`
          : `${event.result.winner} wins (${event.result.reason})`);
      break;
    }
  }
}

/** Fold a state payload (with any new events) into the view. */
export function applyState(view: ClientGameView, payload: StatePayload): ClientGameView {
  const events = payload.events ?? [];
  for (let i = view.eventsSeen; i < events.length; i++) {
    applyEvent(view, events[i]);
  }
  view.eventsSeen = events.length;
  if (payload.phase !== 'finished') {
    view.phase = payload.your_turn ? payload.phase : 'waiting';
  } else {
    view.phase = 'finished';
    view.result = payload.result ?? view.result;
  }
  view.yourTurn = payload.your_turn ?? false;
  if (payload.turn !== undefined) view.turn = payload.turn;
  if (payload.own_pieces) {
    view.ownPieces.clear();
    for (const [kind, squares] of Object.entries(payload.own_pieces)) {
      const piece = (view.color === 'white'
        ? kind.toUpperCase()
        : kind.toLowerCase()) as PieceChar;
      for (const sq of squares) view.ownPieces.set(sq, piece);
    }
    for (const sq of view.ownPieces.keys()) view.remembered.delete(sq);
  }
  return view;
}

/** Turns since a remembered square was last confirmed. */
export function rememberedAge(view: ClientGameView, square: string): number | null {
  const entry = view.remembered.get(square);
  if (!entry) return null;
  return Math.max(0, view.turn - entry.seenTurn);
}

/**
 * Hidden-information audit hook: every opponent piece the view would render
 * must come from a sense window or a capture notice, never anywhere else.
 */
export function visibleOpponentSquares(view: ClientGameView): string[] {
  return [...view.remembered.keys()];
}

export function describeResult(view: ClientGameView): string {
  if (!view.result) return '';
  const reason = view.result.reason === 'king_captured' ? 'king captured' : 'turn-cap draw';
  if (view.result.winner === null) return `Draw: ${reason}`;
  const mine = view.result.winner === view.color;
  return `${mine ? 'You win' : 'You lose'}: ${reason}`;
}

/** Sense-window preview for hover: the clipped 3x3 set around a center. */
export function hoverPreview(center: string): string[] {
  return senseWindow(center);
}
