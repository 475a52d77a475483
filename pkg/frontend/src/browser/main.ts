/**
 * Browser console: form in, script out, live run state and spectra back.
 *
 * Served by the gateway's web bridge.  All instrument access goes through
 * the wire protocol on /ws; this file only renders.
 */

import { decodeBase64 } from '../decoder.js';
import {
  buildScript,
  validate,
  type ExperimentForm,
  type FormConfig,
  type Sample,
} from '../form.js';
import { RunView, type StatusReply } from '../runview.js';
import { heatmapView, lineView } from '../spectrum.js';

interface UiField {
  name: string;
  kind: string;
  label: string;
  default?: unknown;
  optional?: boolean;
}

interface UiConfig extends FormConfig {
  endpoint: { websocket: string };
  instrument: string;
  fields: UiField[];
}

type Reply = { id: number; ok?: boolean; error?: string; event?: unknown }
  & Record<string, unknown>;

class WsClient {
  private ws: WebSocket;
  private nextId = 1;
  private pending = new Map<number, (reply: Reply) => void>();
  onclose: () => void = () => undefined;

  constructor(url: string, onopen: () => void) {
    this.ws = new WebSocket(url);
    this.ws.onopen = onopen;
    this.ws.onclose = () => this.onclose();
    this.ws.onmessage = (msg) => {
      const frame = JSON.parse(String(msg.data)) as Reply;
      if (frame.event !== undefined) return; // no subscriptions yet
      const waiter = this.pending.get(frame.id);
      if (waiter) {
        this.pending.delete(frame.id);
        waiter(frame);
      }
    };
  }

  request(verb: string, fields: Record<string, unknown> = {}): Promise<Reply> {
    const id = this.nextId++;
    return new Promise((resolve, reject) => {
      if (this.ws.readyState !== WebSocket.OPEN) {
        reject(new Error('not connected'));
        return;
      }
      this.pending.set(id, resolve);
      this.ws.send(JSON.stringify({ id, verb, ...fields }));
    });
  }
}

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const view = new RunView();
let client: WsClient | null = null;
let config: UiConfig | null = null;

// -- form handling --

function sampleRow(s?: Partial<Sample>): HTMLTableRowElement {
  const tr = document.createElement('tr');
  const mk = (cls: string, value: string, type = 'text') => {
    const td = document.createElement('td');
    const input = document.createElement('input');
    input.className = cls;
    input.type = type;
    input.value = value;
    td.appendChild(input);
    tr.appendChild(td);
  };
  mk('s-name', s?.name ?? '');
  mk('s-position', String(s?.position ?? ''), 'number');
  mk('s-thickness', String(s?.thickness_mm ?? 1), 'number');
  const td = document.createElement('td');
  const del = document.createElement('button');
  del.textContent = 'x';
  del.onclick = () => tr.remove();
  td.appendChild(del);
  tr.appendChild(td);
  return tr;
}

function readForm(): ExperimentForm {
  const num = (id: string) => Number($<HTMLInputElement>(id).value);
  const samples: Sample[] = [];
  for (const tr of $<HTMLTableSectionElement>('sample-rows').rows) {
    const pick = (cls: string) =>
      tr.querySelector<HTMLInputElement>(`input.${cls}`)!.value;
    samples.push({
      name: pick('s-name'),
      position: Number(pick('s-position')),
      thickness_mm: Number(pick('s-thickness')),
    });
  }
  const tempRaw = $<HTMLInputElement>('f-temperature').value.trim();
  return {
    user: $<HTMLInputElement>('f-user').value,
    file_base: $<HTMLInputElement>('f-file_base').value,
    samples,
    count_limit: num('f-count_limit'),
    time_limit: num('f-time_limit'),
    detectors: [num('f-det-a'), num('f-det-b')] as [number, number],
    temperature: tempRaw === '' ? null : Number(tempRaw),
    temperature_tol: num('f-temperature_tol'),
    vanadium_out: $<HTMLInputElement>('f-vanadium_out').checked,
    env_monitor: $<HTMLInputElement>('f-env_monitor').checked,
  };
}

function applyDefaults(cfg: UiConfig): void {
  for (const field of cfg.fields) {
    if (field.default === undefined) continue;
    if (field.kind === 'toggle') {
      $<HTMLInputElement>(`f-${field.name}`).checked = Boolean(field.default);
    } else if (field.kind === 'detector_pair') {
      const [a, b] = field.default as [number, number];
      $<HTMLInputElement>('f-det-a').value = String(a);
      $<HTMLInputElement>('f-det-b').value = String(b);
    } else {
      $<HTMLInputElement>(`f-${field.name}`).value = String(field.default);
    }
  }
  $('changer-note').textContent =
    `${cfg.instrument}: changer positions 1..${cfg.changer_size}, `
    + `detectors ${cfg.detectors.join(', ')}`;
}

function generate(): void {
  if (!config) return;
  const errors = validate(readForm(), config);
  const list = $('form-errors');
  list.innerHTML = '';
  for (const e of errors) {
    const li = document.createElement('li');
    li.textContent = `${e.field}: ${e.message}`;
    list.appendChild(li);
  }
  if (errors.length === 0) {
    $<HTMLTextAreaElement>('script-text').value = buildScript(readForm());
  }
}

// -- run control --

async function loadScript(): Promise<void> {
  if (!client) return;
  const reply = await client.request('load_script', {
    text: $<HTMLTextAreaElement>('script-text').value,
  });
  view.applyLoadReply(reply as never);
  render();
}

async function poll(): Promise<void> {
  if (!client) return;
  try {
    const reply = await client.request('status');
    if (reply.ok) view.applyStatus(reply as unknown as StatusReply);
  } catch {
    // connection is down; onclose already flipped the view
  }
  render();
}

function render(): void {
  $('banner').textContent = view.banner ?? '';
  $('banner').style.display = view.banner ? 'block' : 'none';
  $('status-line').textContent = view.connected
    ? `${view.status}  statement ${view.lastCompleted + 1}/${view.statements}`
      + `  beam time ${view.simTime}`
    : 'disconnected';
  $('parse-error').textContent = view.parseError ?? '';
  ($('btn-start') as HTMLButtonElement).disabled = !view.startEnabled;
  ($('btn-stop') as HTMLButtonElement).disabled = !view.running;
  const q = view.question;
  $('question-box').style.display = q ? 'block' : 'none';
  if (q) {
    $('question-prompt').textContent =
      `${q.prompt || q.name} [${q.default}]`;
    ($<HTMLInputElement>('answer-input')).placeholder = q.default;
  }
}

// -- spectra --

function drawLine(canvas: HTMLCanvasElement, sums: readonly number[]): void {
  const ctx = canvas.getContext('2d')!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const max = Math.max(1, ...sums);
  const w = canvas.width / sums.length;
  ctx.fillStyle = '#2266aa';
  for (let i = 0; i < sums.length; i++) {
    const h = (sums[i] / max) * (canvas.height - 2);
    ctx.fillRect(i * w, canvas.height - h, Math.max(1, w - 1), h);
  }
}

function drawMap(canvas: HTMLCanvasElement, rows: number, cols: number,
                 cells: readonly number[], max: number): void {
  const ctx = canvas.getContext('2d')!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const cw = canvas.width / cols;
  const ch = canvas.height / rows;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const v = cells[r * cols + c] / (max || 1);
      const shade = Math.round(255 * (1 - v));
      ctx.fillStyle = `rgb(${shade},${shade},255)`;
      ctx.fillRect(c * cw, r * ch, Math.ceil(cw), Math.ceil(ch));
    }
  }
}

async function showSpectrum(): Promise<void> {
  if (!client) return;
  const msg = $('spectrum-msg');
  const reply = await client.request('fetch_spectrum', { mode: 'compressed' });
  if (!reply.ok) {
    msg.textContent = `no data (${reply.error})`;
    return;
  }
  const spec = decodeBase64(String(reply.maks_b64));
  const line = lineView(spec);
  drawLine($('line-canvas') as HTMLCanvasElement, line.sums);
  const map = heatmapView(spec);
  const mapCanvas = $('map-canvas') as HTMLCanvasElement;
  if (map) {
    mapCanvas.style.display = 'block';
    drawMap(mapCanvas, map.rows, map.cols, map.cells, map.max);
  } else {
    mapCanvas.style.display = 'none';
  }
  msg.textContent = `total counts ${spec.total}, monitor ${spec.monitor}, `
    + `live ${spec.liveTime.toFixed(1)}s, dims ${spec.dims.join('x')}`;
}

// -- wiring --

async function start(): Promise<void> {
  config = (await (await fetch('/ui-config')).json()) as UiConfig;
  applyDefaults(config);
  $('sample-rows').appendChild(sampleRow({ position: 1 }));
  $('btn-add-sample').onclick = () =>
    $('sample-rows').appendChild(sampleRow());
  $('btn-generate').onclick = generate;
  $('btn-load').onclick = () => void loadScript();
  $('btn-start').onclick = () => void client?.request('start', {});
  $('btn-stop').onclick = () => void client?.request('stop', {});
  $('btn-spectrum').onclick = () => void showSpectrum();
  $('btn-answer').onclick = () => {
    const value = $<HTMLInputElement>('answer-input').value;
    void client?.request('answer', { value });
    $<HTMLInputElement>('answer-input').value = '';
  };

  const url = `ws://${location.host}${config.endpoint.websocket}`;
  const connect = () => {
    client = new WsClient(url, () => {
      view.connected = true;
      render();
    });
    client.onclose = () => {
      view.connectionLost();
      render();
      setTimeout(connect, 2000); // the kernel may be mid-restart
    };
  };
  connect();
  setInterval(() => void poll(), 500);
}

void start();
