/**
 * Browser console: form in, script out, live run state and spectra back.
 *
 * Served by the gateway's web bridge.  All instrument access goes through
 * the wire protocol on /ws; this file only renders.
 */
import { decodeBase64 } from '../decoder.js';
import { buildScript, validate, } from '../form.js';
import { RunView } from '../runview.js';
import { heatmapView, lineView } from '../spectrum.js';
class WsClient {
    ws;
    nextId = 1;
    pending = new Map();
    onclose = () => undefined;
    constructor(url, onopen) {
        this.ws = new WebSocket(url);
        this.ws.onopen = onopen;
        this.ws.onclose = () => this.onclose();
        this.ws.onmessage = (msg) => {
            const frame = JSON.parse(String(msg.data));
            if (frame.event !== undefined)
                return; // no subscriptions yet
            const waiter = this.pending.get(frame.id);
            if (waiter) {
                this.pending.delete(frame.id);
                waiter(frame);
            }
        };
    }
    request(verb, fields = {}) {
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
const $ = (id) => {
    const el = document.getElementById(id);
    if (!el)
        throw new Error(`missing element #${id}`);
    return el;
};
const view = new RunView();
let client = null;
let config = null;
// -- form handling --
function sampleRow(s) {
    const tr = document.createElement('tr');
    const mk = (cls, value, type = 'text') => {
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
function readForm() {
    const num = (id) => Number($(id).value);
    const samples = [];
    for (const tr of $('sample-rows').rows) {
        const pick = (cls) => tr.querySelector(`input.${cls}`).value;
        samples.push({
            name: pick('s-name'),
            position: Number(pick('s-position')),
            thickness_mm: Number(pick('s-thickness')),
        });
    }
    const tempRaw = $('f-temperature').value.trim();
    return {
        user: $('f-user').value,
        file_base: $('f-file_base').value,
        samples,
        count_limit: num('f-count_limit'),
        time_limit: num('f-time_limit'),
        detectors: [num('f-det-a'), num('f-det-b')],
        temperature: tempRaw === '' ? null : Number(tempRaw),
        temperature_tol: num('f-temperature_tol'),
        vanadium_out: $('f-vanadium_out').checked,
        env_monitor: $('f-env_monitor').checked,
    };
}
function applyDefaults(cfg) {
    for (const field of cfg.fields) {
        if (field.default === undefined)
            continue;
        if (field.kind === 'toggle') {
            $(`f-${field.name}`).checked = Boolean(field.default);
        }
        else if (field.kind === 'detector_pair') {
            const [a, b] = field.default;
            $('f-det-a').value = String(a);
            $('f-det-b').value = String(b);
        }
        else {
            $(`f-${field.name}`).value = String(field.default);
        }
    }
    $('changer-note').textContent =
        `${cfg.instrument}: changer positions 1..${cfg.changer_size}, `
            + `detectors ${cfg.detectors.join(', ')}`;
}
function generate() {
    if (!config)
        return;
    const errors = validate(readForm(), config);
    const list = $('form-errors');
    list.innerHTML = '';
    for (const e of errors) {
        const li = document.createElement('li');
        li.textContent = `${e.field}: ${e.message}`;
        list.appendChild(li);
    }
    if (errors.length === 0) {
        $('script-text').value = buildScript(readForm());
    }
}
// -- run control --
async function loadScript() {
    if (!client)
        return;
    const reply = await client.request('load_script', {
        text: $('script-text').value,
    });
    view.applyLoadReply(reply);
    render();
}
async function poll() {
    if (!client)
        return;
    try {
        const reply = await client.request('status');
        if (reply.ok)
            view.applyStatus(reply);
    }
    catch {
        // connection is down; onclose already flipped the view
    }
    render();
}
function render() {
    $('banner').textContent = view.banner ?? '';
    $('banner').style.display = view.banner ? 'block' : 'none';
    $('status-line').textContent = view.connected
        ? `${view.status}  statement ${view.lastCompleted + 1}/${view.statements}`
            + `  beam time ${view.simTime}`
        : 'disconnected';
    $('parse-error').textContent = view.parseError ?? '';
    $('btn-start').disabled = !view.startEnabled;
    $('btn-stop').disabled = !view.running;
    const q = view.question;
    $('question-box').style.display = q ? 'block' : 'none';
    if (q) {
        $('question-prompt').textContent =
            `${q.prompt || q.name} [${q.default}]`;
        ($('answer-input')).placeholder = q.default;
    }
}
// -- spectra --
function drawLine(canvas, sums) {
    const ctx = canvas.getContext('2d');
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const max = Math.max(1, ...sums);
    const w = canvas.width / sums.length;
    ctx.fillStyle = '#2266aa';
    for (let i = 0; i < sums.length; i++) {
        const h = (sums[i] / max) * (canvas.height - 2);
        ctx.fillRect(i * w, canvas.height - h, Math.max(1, w - 1), h);
    }
}
function drawMap(canvas, rows, cols, cells, max) {
    const ctx = canvas.getContext('2d');
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
async function showSpectrum() {
    if (!client)
        return;
    const msg = $('spectrum-msg');
    const reply = await client.request('fetch_spectrum', { mode: 'compressed' });
    if (!reply.ok) {
        msg.textContent = `no data (${reply.error})`;
        return;
    }
    const spec = decodeBase64(String(reply.maks_b64));
    const line = lineView(spec);
    drawLine($('line-canvas'), line.sums);
    const map = heatmapView(spec);
    const mapCanvas = $('map-canvas');
    if (map) {
        mapCanvas.style.display = 'block';
        drawMap(mapCanvas, map.rows, map.cols, map.cells, map.max);
    }
    else {
        mapCanvas.style.display = 'none';
    }
    msg.textContent = `total counts ${spec.total}, monitor ${spec.monitor}, `
        + `live ${spec.liveTime.toFixed(1)}s, dims ${spec.dims.join('x')}`;
}
// -- wiring --
async function start() {
    config = (await (await fetch('/ui-config')).json());
    applyDefaults(config);
    $('sample-rows').appendChild(sampleRow({ position: 1 }));
    $('btn-add-sample').onclick = () => $('sample-rows').appendChild(sampleRow());
    $('btn-generate').onclick = generate;
    $('btn-load').onclick = () => void loadScript();
    $('btn-start').onclick = () => void client?.request('start', {});
    $('btn-stop').onclick = () => void client?.request('stop', {});
    $('btn-spectrum').onclick = () => void showSpectrum();
    $('btn-answer').onclick = () => {
        const value = $('answer-input').value;
        void client?.request('answer', { value });
        $('answer-input').value = '';
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
