// Session client: one websocket, an offline command queue, and the overlay
// model reduced from the event stream. The socket implementation is
// injected so tests run against an in-memory server and the browser uses
// the native WebSocket.

import { OverlayModel } from './overlay';
import type { ClientCommand, ServerMessage } from './protocol';

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

interface QueuedCommand {
  id: number;
  command: ClientCommand;
}

export class SessionClient {
  readonly model: OverlayModel;
  connected = false;
  private socket: SocketLike | null = null;
  private queue: QueuedCommand[] = [];
  private commandCounter = 0;
  private listeners: ((message: ServerMessage) => void)[] = [];

  constructor(
    private readonly baseUrl: string,
    private readonly factory: SocketFactory,
    model?: OverlayModel,
  ) {
    this.model = model ?? new OverlayModel();
  }

  /** Pending offline commands, visible so the UI can show the indicator. */
  get offlineQueueLength(): number {
    return this.queue.length;
  }

  connect(): void {
    if (this.socket) {
      return;
    }
    const url = this.model.synced
      ? `${this.baseUrl}/ws/session?last_seq=${this.model.lastSeq}`
      : `${this.baseUrl}/ws/session`;
    const socket = this.factory(url);
    this.socket = socket;
    socket.onopen = () => {
      this.connected = true;
      this.flushQueue();
    };
    socket.onmessage = (event) => {
      const message = JSON.parse(event.data) as ServerMessage;
      this.model.applyServerMessage(message);
      for (const listener of this.listeners) {
        listener(message);
      }
    };
    socket.onclose = () => {
      this.connected = false;
      this.socket = null;
    };
  }

  disconnect(): void {
    this.socket?.close();
    this.socket = null;
    this.connected = false;
  }

  reconnect(): void {
    this.disconnect();
    this.connect();
  }

  onMessage(listener: (message: ServerMessage) => void): void {
    this.listeners.push(listener);
  }

  /** Text (or transcribed speech) enters the agent queue server-side. */
  submitCommand(text: string): void {
    this.dispatch({ type: 'utterance', text });
  }

  /** Clicking tile n sends {select: n} and locks the grid until confirmed. */
  selectTile(index: number): void {
    this.model.lockGrid();
    this.dispatch({ type: 'select', index });
  }

  stop(): void {
    this.dispatch({ type: 'stop' });
  }

  private dispatch(command: ClientCommand): void {
    if (this.connected && this.socket) {
      this.socket.send(JSON.stringify(command));
    } else {
      // queued exactly once: each entry leaves the queue before it is sent
      this.commandCounter += 1;
      this.queue.push({ id: this.commandCounter, command });
    }
  }

  private flushQueue(): void {
    while (this.queue.length > 0 && this.connected && this.socket) {
      const entry = this.queue.shift()!;
      this.socket.send(JSON.stringify(entry.command));
    }
  }
}
