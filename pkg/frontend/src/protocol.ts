/**
 * Gateway wire client for Node: one JSON object per LF-terminated line
 * over TCP.  The browser build never imports this module; it talks to the
 * bridge over WebSocket with the same frame vocabulary.
 */

import * as net from 'node:net';

export interface Reply {
  id: number;
  ok: boolean;
  error?: string;
  [key: string]: unknown;
}

export interface EventFrame {
  id: number;
  event: Record<string, unknown>;
}

export class GatewayRequestError extends Error {
  constructor(public reply: Reply) {
    super(reply.error ?? 'request failed');
    this.name = 'GatewayRequestError';
  }
}

interface Pending {
  resolve: (reply: Reply) => void;
  reject: (err: Error) => void;
}

export class GatewayClient {
  private socket: net.Socket;
  private buffer = '';
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private eventHandlers = new Map<number, (ev: Record<string, unknown>) => void>();
  private closedHandlers: Array<() => void> = [];
  private closed = false;

  private constructor(socket: net.Socket) {
    this.socket = socket;
    socket.setEncoding('utf-8');
    socket.on('data', (chunk: string) => this.feed(chunk));
    socket.on('error', () => { /* surfaced via close */ });
    socket.on('close', () => this.teardown());
  }

  static connect(host: string, port: number,
                 timeoutMs = 5000): Promise<GatewayClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port });
      const timer = setTimeout(() => {
        socket.destroy();
        reject(new Error(`connect to ${host}:${port} timed out`));
      }, timeoutMs);
      socket.once('connect', () => {
        clearTimeout(timer);
        resolve(new GatewayClient(socket));
      });
      socket.once('error', (err) => {
        clearTimeout(timer);
        reject(err);
      });
    });
  }

  onClose(fn: () => void): void {
    this.closedHandlers.push(fn);
  }

  private teardown(): void {
    if (this.closed) return;
    this.closed = true;
    const err = new Error('connection closed');
    for (const p of this.pending.values()) p.reject(err);
    this.pending.clear();
    for (const fn of this.closedHandlers) fn();
  }

  private feed(chunk: string): void {
    this.buffer += chunk;
    let nl: number;
    while ((nl = this.buffer.indexOf('\n')) >= 0) {
      const line = this.buffer.slice(0, nl).trim();
      this.buffer = this.buffer.slice(nl + 1);
      if (!line) continue;
      this.dispatch(JSON.parse(line));
    }
  }

  private dispatch(frame: Reply | EventFrame): void {
    if ('event' in frame) {
      const ev = frame as EventFrame;
      const handler = this.eventHandlers.get(ev.id);
      if (handler) handler(ev.event);
      return;
    }
    const waiter = this.pending.get(frame.id);
    if (waiter) {
      this.pending.delete(frame.id);
      waiter.resolve(frame);
    }
  }

  /** Send a request; resolve with the raw reply, ok or not. */
  request(verb: string, fields: Record<string, unknown> = {},
          timeoutMs = 10000): Promise<Reply> {
    if (this.closed) {
      return Promise.reject(new Error('connection closed'));
    }
    const id = this.nextId++;
    const frame = JSON.stringify({ id, verb, ...fields });
    return new Promise<Reply>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        reject(new Error(`no reply to ${verb} within ${timeoutMs / 1000}s`));
      }, timeoutMs);
      this.pending.set(id, {
        resolve: (reply) => { clearTimeout(timer); resolve(reply); },
        reject: (err) => { clearTimeout(timer); reject(err); },
      });
      this.socket.write(frame + '\n');
    });
  }

  /** Send a request; resolve with the reply body or throw on ok=false. */
  async call(verb: string, fields: Record<string, unknown> = {},
             timeoutMs = 10000): Promise<Reply> {
    const reply = await this.request(verb, fields, timeoutMs);
    if (!reply.ok) throw new GatewayRequestError(reply);
    return reply;
  }

  /** Subscribe to a path prefix; `fn` receives each change event. */
  async subscribe(prefix: string,
                  fn: (ev: Record<string, unknown>) => void): Promise<void> {
    const id = this.nextId++;
    const frame = JSON.stringify({ id, verb: 'subscribe', prefix });
    this.eventHandlers.set(id, fn);
    const reply = await new Promise<Reply>((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new Error('no reply to subscribe within 10s')), 10000);
      this.pending.set(id, {
        resolve: (r) => { clearTimeout(timer); resolve(r); },
        reject: (err) => { clearTimeout(timer); reject(err); },
      });
      this.socket.write(frame + '\n');
    });
    if (!reply.ok) {
      this.eventHandlers.delete(id);
      throw new GatewayRequestError(reply);
    }
  }

  close(): void {
    this.socket.destroy();
    this.teardown();
  }
}
