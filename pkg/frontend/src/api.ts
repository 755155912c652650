// Typed client for the game service's JSON protocol. Every call returns the
// unwrapped payload; protocol errors throw ApiError with the server's code.

import type {
  Color,
  CreatePayload,
  GameRecord,
  StatePayload,
  WireMessage,
} from './types.js';

export class ApiError extends Error {
  code: string;
  status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  const body = (await response.json()) as WireMessage<T>;
  if (!response.ok || body.type === 'error') {
    const payload = body.payload as { code?: string; message?: string };
    throw new ApiError(response.status, payload.code ?? 'unknown',
      payload.message ?? response.statusText);
  }
  return body.payload;
}

export interface SeatSpec {
  kind: 'human' | 'random' | 'greedy' | 'net';
  open?: boolean;
  checkpoint?: string;
  mode?: 'argmax' | 'sample';
  temperature?: number;
}

export class GameApi {
  constructor(private base: string = '') {}

  private url(path: string): string {
    return this.base + path;
  }

  async createGame(white: SeatSpec, black: SeatSpec, options: {
    seed?: number; turn_cap?: number;
  } = {}): Promise<{ gameId: string; payload: CreatePayload }> {
    const response = await fetch(this.url('/games'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ white, black, ...options }),
    });
    const body = (await response.json()) as WireMessage<CreatePayload>;
    if (!response.ok) {
      const payload = body.payload as unknown as { code?: string; message?: string };
      throw new ApiError(response.status, payload.code ?? 'unknown', payload.message ?? '');
    }
    return { gameId: body.game_id as string, payload: body.payload };
  }

  async join(gameId: string, seat: Color): Promise<{ token: string }> {
    const response = await fetch(this.url(`/games/${gameId}/join`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ seat }),
    });
    return unwrap(response);
  }

  async state(gameId: string, token: string, options: {
    wait?: boolean; version?: number;
  } = {}): Promise<StatePayload> {
    const params = new URLSearchParams({ token });
    if (options.wait) params.set('wait', '1');
    if (options.version !== undefined) params.set('version', String(options.version));
    const response = await fetch(this.url(`/games/${gameId}/state?${params}`));
    return unwrap(response);
  }

  async sense(gameId: string, token: string, square: string): Promise<unknown> {
    const response = await fetch(this.url(`/games/${gameId}/sense`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ token, square }),
    });
    return unwrap(response);
  }

  async move(gameId: string, token: string, move: string): Promise<unknown> {
    const response = await fetch(this.url(`/games/${gameId}/move`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ token, move }),
    });
    return unwrap(response);
  }

  async replay(gameId: string): Promise<GameRecord> {
    const response = await fetch(this.url(`/games/${gameId}/replay`));
    if (!response.ok) {
      throw new ApiError(response.status, 'replay_unavailable',
        `no replay for ${gameId}`);
    }
    return (await response.json()) as GameRecord;
  }

  async listGames(): Promise<{ live: Array<Record<string, unknown>>; stored: string[] }> {
    const response = await fetch(this.url('/games'));
    return unwrap(response);
  }
}
