import { readFileSync } from 'node:fs';
import { describe, expect, it } from 'vitest';

import {
  CorruptPayload,
  DecodedSpectrum,
  decode,
  decodeBase64,
  ENC_RAW,
  ENC_RLE,
} from '../src/decoder.js';

interface GoldenEntry {
  name: string;
  maks_b64: string;
  dims: number[];
  monitor: number;
  live_time: number;
  total: number;
  line_argmax: number;
  line_sums?: number[];
}

const golden: { entries: GoldenEntry[] } = JSON.parse(
  readFileSync(new URL('./fixtures/decoder_golden.json', import.meta.url),
               'utf-8'));

const byName = new Map(golden.entries.map((e) => [e.name, e]));

function specOf(name: string): DecodedSpectrum {
  return decodeBase64(byName.get(name)!.maks_b64);
}

describe('golden containers', () => {
  it.each(golden.entries.map((e) => [e.name, e] as const))(
    'decodes %s', (_name, entry) => {
      const spec = decodeBase64(entry.maks_b64);
      expect(spec.dims).toEqual(entry.dims);
      expect(spec.monitor).toBe(entry.monitor);
      expect(spec.liveTime).toBe(entry.live_time);
      expect(spec.total).toBe(entry.total);
      expect(spec.counts.length)
        .toBe(entry.dims.reduce((a, b) => a * b, 1));
      spec.dims.forEach((d, i) => {
        expect(d * spec.factors[i]).toBe(spec.originalDims[i]);
      });
    });

  it('reads the run-length encoding with its rebin factors', () => {
    const spec = specOf('psd_rebinned_4x4x4');
    expect(spec.encoding).toBe(ENC_RLE);
    expect(spec.factors).toEqual([4, 4, 4]);
    expect(spec.originalDims).toEqual([64, 64, 256]);
  });

  it('reads the direct (unencoded) layout', () => {
    const spec = specOf('raw_direct_8x16');
    expect(spec.encoding).toBe(ENC_RAW);
    expect(spec.factors).toEqual([1, 1]);
  });

  it('keeps counts beyond 32 bits exact', () => {
    const spec = specOf('sparse_wide_values');
    expect(spec.total).toBe(1099511627782);
    expect(Math.max(...spec.counts)).toBe(2 ** 40);
  });
});

// -- hand-built containers for the failure paths --

function makeContainer(opts: {
  dims: number[];
  factors?: number[];
  encoding?: number;
  payload: number[];
  declared?: number;
}): Uint8Array {
  const nd = opts.dims.length;
  const factors = opts.factors ?? opts.dims.map(() => 1);
  const head = new Uint8Array(6 + 8 * nd + 1 + 8 + 8 + 8);
  head.set([0x4d, 0x41, 0x4b, 0x53, 0x31, nd]); // "MAKS1" + ndims
  const view = new DataView(head.buffer);
  let pos = 6;
  for (const d of opts.dims) { view.setUint32(pos, d, true); pos += 4; }
  for (const f of factors) { view.setUint32(pos, f, true); pos += 4; }
  view.setUint8(pos, opts.encoding ?? ENC_RLE); pos += 1;
  view.setBigUint64(pos, 0n, true); pos += 8;       // monitor
  view.setFloat64(pos, 0.0, true); pos += 8;        // live time
  view.setBigUint64(pos, BigInt(opts.declared ?? opts.payload.length), true);
  const blob = new Uint8Array(head.length + opts.payload.length);
  blob.set(head);
  blob.set(opts.payload, head.length);
  return blob;
}

describe('corrupt containers', () => {
  const good = () => decodeBase64(byName.get('tof_line_512')!.maks_b64);

  it('rejects a wrong magic', () => {
    const blob = new Uint8Array(
      Buffer.from(byName.get('tof_line_512')!.maks_b64, 'base64'));
    blob[0] ^= 0xff;
    expect(() => decode(blob)).toThrow(CorruptPayload);
    expect(() => decode(blob)).toThrow('bad magic');
    expect(good().dims).toEqual([512]);
  });

  it('rejects a truncated header', () => {
    const blob = new Uint8Array(
      Buffer.from(byName.get('tof_line_512')!.maks_b64, 'base64'));
    expect(() => decode(blob.subarray(0, 12))).toThrow('truncated header');
  });

  it('rejects a payload shorter than declared', () => {
    const blob = new Uint8Array(
      Buffer.from(byName.get('tof_line_512')!.maks_b64, 'base64'));
    expect(() => decode(blob.subarray(0, blob.length - 1)))
      .toThrow(/payload length/);
  });

  it('rejects a zero-length zero run', () => {
    const blob = makeContainer({ dims: [4], payload: [0x00, 0x00] });
    expect(() => decode(blob)).toThrow('zero-length run');
  });

  it('rejects more values than cells', () => {
    const blob = makeContainer({ dims: [2], payload: [1, 1, 1] });
    expect(() => decode(blob)).toThrow('more values than cells');
  });

  it('rejects a payload that fills too few cells', () => {
    const blob = makeContainer({ dims: [4], payload: [1, 1] });
    expect(() => decode(blob)).toThrow('decoded 2 cells, expected 4');
  });

  it('rejects a raw payload of the wrong size', () => {
    const blob = makeContainer({
      dims: [4], encoding: ENC_RAW, payload: [0, 0, 0, 0],
    });
    expect(() => decode(blob)).toThrow(/raw payload/);
  });

  it('rejects an unknown encoding byte', () => {
    const blob = makeContainer({ dims: [1], encoding: 7, payload: [1] });
    expect(() => decode(blob)).toThrow('unknown encoding 7');
  });

  it('rejects factors that do not divide the dims', () => {
    const blob = makeContainer({
      dims: [5], factors: [2], payload: [0x00, 0x02],
    });
    expect(() => decode(blob)).toThrow(/do not divide/);
  });

  it('rejects an unterminated varint', () => {
    const blob = makeContainer({ dims: [1], payload: [0x81] });
    expect(() => decode(blob)).toThrow('ends inside a varint');
  });
});
