import { readFileSync } from 'node:fs';
import { describe, expect, it } from 'vitest';

import {
  checkpointIndices,
  classify,
  SkeletonError,
} from '../src/skeleton.js';

const corpusText = readFileSync(
  new URL('./fixtures/yumo_pb160502a.snx', import.meta.url), 'utf-8');

interface Frozen {
  statement_count: number;
  checkpoints: number[];
  counts: Record<string, number>;
  kinds: string[];
  macro_calls: { index: number; name: string }[];
  device_commands: { index: number; device: string }[];
}

const frozen: Frozen = JSON.parse(readFileSync(
  new URL('./fixtures/corpus_classification.json', import.meta.url),
  'utf-8'));

describe('corpus classification', () => {
  it('matches the hand-frozen kinds line for line', () => {
    const result = classify(corpusText);
    expect(result).toHaveLength(frozen.statement_count);
    expect(result.map((s) => s.kind)).toEqual(frozen.kinds);
  });

  it('finds every checkpoint at its frozen index', () => {
    expect(checkpointIndices(corpusText)).toEqual(frozen.checkpoints);
  });

  it('names every macro and device', () => {
    const result = classify(corpusText);
    for (const call of frozen.macro_calls) {
      expect(result[call.index].name).toBe(call.name);
    }
    for (const cmd of frozen.device_commands) {
      expect(result[cmd.index].name).toBe(cmd.device);
    }
  });

  it('counts each kind as frozen', () => {
    const result = classify(corpusText);
    for (const [kind, count] of Object.entries(frozen.counts)) {
      expect(result.filter((s) => s.kind === kind)).toHaveLength(count);
    }
  });
});

describe('line rules', () => {
  it('takes only the exact six-character marker as a checkpoint', () => {
    expect(classify(';+++++')[0].kind).toBe('checkpoint');
    expect(classify(';++++++')[0].kind).toBe('comment');
    expect(classify(';+++++ note')[0].kind).toBe('comment');
    expect(classify('  ;+++++  ')[0].kind).toBe('checkpoint');
  });

  it('skips blank lines without consuming an index', () => {
    const result = classify('auto_test\n\n\nMotor: getpos\n');
    expect(result).toEqual([
      { kind: 'macro', name: 'auto_test' },
      { kind: 'device', name: 'Motor' },
    ]);
  });

  it('separates bare macros from calls', () => {
    expect(classify('auto_test')[0]).toEqual(
      { kind: 'macro', name: 'auto_test' });
    expect(classify('usf_set(a,b,c)')[0]).toEqual(
      { kind: 'macro', name: 'usf_set' });
  });

  it('classifies directives', () => {
    expect(classify('#set @f PB160502a')[0]).toEqual(
      { kind: 'setvar', name: 'f' });
    expect(classify('#ask @f PB160502a "file base"')[0]).toEqual(
      { kind: 'ask', name: 'f' });
  });

  it('rejects what the instrument would reject', () => {
    expect(() => classify('???')).toThrow(SkeletonError);
    expect(() => classify('#set f 1')).toThrow(/line 1/);
    expect(() => classify('#bogus @f 1')).toThrow(/unrecognized directive/);
    expect(() => classify('#ask @f a b')).toThrow(/unrecognized directive/);
    expect(() => classify('Motor:')).toThrow(/bad device command/);
    expect(() => classify('Motor: 123')).toThrow(/bad device command/);
    expect(() => classify('ok\nalso ok(\n'))
      .toThrow(/line 2: unrecognized statement/);
  });
});
