export * from './protocol';
export * from './rle';
export * from './colors';
export * from './overlay';
export * from './client';
export * from './speech';

import { SessionClient, SocketLike } from './client';
import { composeOverlay } from './overlay';
import { startSpeechCapture } from './speech';

/**
 * Browser entry: wires the client to a canvas, a command input, and the
 * candidate grid container. Everything interesting is testable below this
 * layer; this is just DOM glue.
 */
export function mountConsole(root: HTMLElement, baseUrl: string): SessionClient {
  const client = new SessionClient(
    baseUrl.replace(/^http/, 'ws'),
    (url) => new WebSocket(url) as unknown as SocketLike,
  );

  const canvas = document.createElement('canvas');
  const grid = document.createElement('div');
  grid.className = 'candidate-grid';
  const form = document.createElement('form');
  const input = document.createElement('input');
  input.placeholder = 'say or type a command';
  const status = document.createElement('span');
  status.className = 'status';
  form.append(input);
  root.append(canvas, grid, form, status);

  form.onsubmit = (event) => {
    event.preventDefault();
    if (input.value.trim()) {
      client.submitCommand(input.value.trim());
      input.value = '';
    }
  };

  startSpeechCapture((text) => client.submitCommand(text));

  client.onMessage(() => {
    status.textContent = client.connected
      ? ''
      : `offline - ${client.offlineQueueLength} queued`;
    const model = client.model;
    if (model.grid) {
      grid.replaceChildren(
        ...(model.grid.notice
          ? [Object.assign(document.createElement('p'), { textContent: model.grid.notice })]
          : model.grid.tiles.map((tile) => {
              const button = document.createElement('button');
              button.textContent = String(tile.index);
              button.disabled = model.grid!.locked;
              button.onclick = () => client.selectTile(tile.index);
              return button;
            })),
      );
    } else {
      grid.replaceChildren();
    }
    const first = model.objects.values().next().value;
    if (first) {
      canvas.width = first.mask.w;
      canvas.height = first.mask.h;
      const buffer = composeOverlay(model, canvas.width, canvas.height);
      const ctx = canvas.getContext('2d');
      if (ctx) {
        const image = ctx.createImageData(canvas.width, canvas.height);
        image.data.set(buffer);
        ctx.putImageData(image, 0, 0);
      }
    }
  });

  client.connect();
  return client;
}
