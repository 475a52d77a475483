/**
 * Browser-side decoder for the MAKS1 spectrum container.
 *
 * Layout (little-endian): magic "MAKS1", u8 ndims, ndims u32 extents,
 * ndims u32 rebin factors, u8 encoding (0 raw u64 cells, 1 zero-run +
 * LEB128), u64 monitor, f64 live time, u64 payload length, payload.
 */
export const MAGIC = 'MAKS1';
export const ENC_RAW = 0;
export const ENC_RLE = 1;
export class CorruptPayload extends Error {
}
/** Read one LEB128 varint; counts stay below 2^53 so numbers are exact. */
function readVarint(bytes, pos) {
    let value = 0;
    let scale = 1;
    let shift = 0;
    for (;;) {
        if (pos >= bytes.length) {
            throw new CorruptPayload('payload ends inside a varint');
        }
        const byte = bytes[pos];
        pos += 1;
        value += (byte & 0x7f) * scale;
        if ((byte & 0x80) === 0) {
            if (!Number.isSafeInteger(value)) {
                throw new CorruptPayload('count too large for exact decoding');
            }
            return [value, pos];
        }
        scale *= 128;
        shift += 7;
        if (shift > 63) {
            throw new CorruptPayload('varint exceeds 64 bits');
        }
    }
}
function decodeRuns(payload, nCells) {
    const counts = new Float64Array(nCells);
    let filled = 0;
    let pos = 0;
    while (pos < payload.length) {
        if (payload[pos] === 0x00) {
            let run;
            [run, pos] = readVarint(payload, pos + 1);
            if (run < 1) {
                throw new CorruptPayload('zero-length run');
            }
            filled += run;
        }
        else {
            let value;
            [value, pos] = readVarint(payload, pos);
            if (filled >= nCells) {
                throw new CorruptPayload('more values than cells');
            }
            counts[filled] = value;
            filled += 1;
        }
    }
    if (filled !== nCells) {
        throw new CorruptPayload(`decoded ${filled} cells, expected ${nCells}`);
    }
    return counts;
}
function decodeRaw(payload, nCells) {
    if (payload.length !== 8 * nCells) {
        throw new CorruptPayload(`raw payload ${payload.length} bytes != ${8 * nCells}`);
    }
    const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
    const counts = new Float64Array(nCells);
    for (let i = 0; i < nCells; i++) {
        const cell = view.getBigUint64(8 * i, true);
        if (cell > BigInt(Number.MAX_SAFE_INTEGER)) {
            throw new CorruptPayload('count too large for exact decoding');
        }
        counts[i] = Number(cell);
    }
    return counts;
}
export function decode(blob) {
    const ascii = String.fromCharCode(...blob.subarray(0, 5));
    if (ascii !== MAGIC) {
        throw new CorruptPayload('bad magic');
    }
    if (blob.length < 6) {
        throw new CorruptPayload('truncated header');
    }
    const nd = blob[5];
    const headEnd = 6 + 8 * nd + 1 + 8 + 8 + 8;
    if (blob.length < headEnd) {
        throw new CorruptPayload('truncated header');
    }
    const view = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
    const originalDims = [];
    const factors = [];
    let pos = 6;
    for (let i = 0; i < nd; i++, pos += 4) {
        originalDims.push(view.getUint32(pos, true));
    }
    for (let i = 0; i < nd; i++, pos += 4) {
        factors.push(view.getUint32(pos, true));
    }
    const encoding = view.getUint8(pos);
    pos += 1;
    const monitor = Number(view.getBigUint64(pos, true));
    pos += 8;
    const liveTime = view.getFloat64(pos, true);
    pos += 8;
    const declared = Number(view.getBigUint64(pos, true));
    pos += 8;
    if (encoding !== ENC_RAW && encoding !== ENC_RLE) {
        throw new CorruptPayload(`unknown encoding ${encoding}`);
    }
    const payload = blob.subarray(pos);
    if (payload.length !== declared) {
        throw new CorruptPayload(`payload length ${payload.length} != declared ${declared}`);
    }
    const dims = originalDims.map((d, i) => d / factors[i]);
    if (dims.some((d) => !Number.isInteger(d) || d < 0)) {
        throw new CorruptPayload(`factors ${factors} do not divide ${originalDims}`);
    }
    const nCells = dims.reduce((a, b) => a * b, 1);
    const counts = encoding === ENC_RAW
        ? decodeRaw(payload, nCells)
        : decodeRuns(payload, nCells);
    let total = 0;
    for (let i = 0; i < counts.length; i++) {
        total += counts[i];
    }
    return { dims, originalDims, factors, encoding, monitor, liveTime,
        counts, total };
}
export function decodeBase64(b64) {
    if (typeof Buffer !== 'undefined') {
        return decode(new Uint8Array(Buffer.from(b64, 'base64')));
    }
    const raw = atob(b64);
    const bytes = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) {
        bytes[i] = raw.charCodeAt(i);
    }
    return decode(bytes);
}
