import { readFileSync } from 'node:fs';
import { describe, expect, it } from 'vitest';

import { buildScript, validate, type ExperimentForm } from '../src/form.js';
import { checkpointIndices, classify } from '../src/skeleton.js';
import { archivedForm, CONFIG, randomForm } from './support.js';

const corpusText = readFileSync(
  new URL('./fixtures/yumo_pb160502a.snx', import.meta.url), 'utf-8');

interface FrozenClassification {
  statement_count: number;
  checkpoints: number[];
  kinds: string[];
  macro_calls: { index: number; name: string; argc: number }[];
}

const frozen: FrozenClassification = JSON.parse(readFileSync(
  new URL('./fixtures/corpus_classification.json', import.meta.url),
  'utf-8'));

describe('validate', () => {
  it('accepts the archived experiment', () => {
    expect(validate(archivedForm(), CONFIG)).toEqual([]);
  });

  const reject = (mutate: (f: ExperimentForm) => void, field: string) => {
    const form = archivedForm();
    mutate(form);
    const errors = validate(form, CONFIG);
    expect(errors.length).toBeGreaterThan(0);
    expect(errors.map((e) => e.field)).toContain(field);
  };

  it('requires at least one sample', () =>
    reject((f) => { f.samples = []; }, 'samples'));

  it('rejects a file base with spaces', () =>
    reject((f) => { f.file_base = 'PB 1605'; }, 'file_base'));

  it('rejects an empty file base', () =>
    reject((f) => { f.file_base = ''; }, 'file_base'));

  it('rejects a user name starting with a digit', () =>
    reject((f) => { f.user = '9lives'; }, 'user'));

  it('rejects a user name containing a comma', () =>
    reject((f) => { f.user = 'a,b'; }, 'user'));

  it('rejects a sample name containing a comma', () =>
    reject((f) => { f.samples[0].name = 'D2O, pure'; }, 'samples[0]'));

  it('rejects duplicate changer positions', () =>
    reject((f) => {
      f.samples.push({ name: 'Dodecane', position: 11, thickness_mm: 2 });
    }, 'samples[1]'));

  it('rejects positions outside the changer', () => {
    reject((f) => { f.samples[0].position = 0; }, 'samples[0]');
    reject((f) => { f.samples[0].position = 13; }, 'samples[0]');
    reject((f) => { f.samples[0].position = 1.5; }, 'samples[0]');
  });

  it('rejects a non-positive thickness', () =>
    reject((f) => { f.samples[0].thickness_mm = 0; }, 'samples[0]'));

  it('rejects non-positive or fractional limits', () => {
    reject((f) => { f.count_limit = 0; }, 'count_limit');
    reject((f) => { f.count_limit = 10.5; }, 'count_limit');
    reject((f) => { f.time_limit = -5; }, 'time_limit');
  });

  it('rejects a repeated or unknown detector', () => {
    reject((f) => { f.detectors = [1, 1]; }, 'detectors');
    reject((f) => { f.detectors = [1, 3]; }, 'detectors');
  });

  it('rejects a zero temperature tolerance', () =>
    reject((f) => { f.temperature_tol = 0; }, 'temperature_tol'));

  it('rejects a non-numeric temperature', () =>
    reject((f) => { f.temperature = Number.NaN; }, 'temperature'));

  it('accepts an absent temperature', () => {
    const form = archivedForm();
    form.temperature = null;
    expect(validate(form, CONFIG)).toEqual([]);
  });
});

describe('buildScript against the archived script', () => {
  it('reproduces the statement skeleton exactly', () => {
    const generated = classify(buildScript(archivedForm()));
    const reference = classify(corpusText);
    expect(generated.map((s) => s.kind)).toEqual(reference.map((s) => s.kind));
    expect(generated.map((s) => s.name ?? null))
      .toEqual(reference.map((s) => s.name ?? null));
  });

  it('matches the hand-frozen classification', () => {
    const generated = classify(buildScript(archivedForm()));
    expect(generated).toHaveLength(frozen.statement_count);
    expect(generated.map((s) => s.kind)).toEqual(frozen.kinds);
    for (const call of frozen.macro_calls) {
      expect(generated[call.index]).toEqual(
        { kind: 'macro', name: call.name });
    }
    expect(checkpointIndices(buildScript(archivedForm())))
      .toEqual(frozen.checkpoints);
  });

  it('reproduces every non-comment line verbatim', () => {
    const action = (text: string) => text.split('\n')
      .map((l) => l.trim())
      .filter((l) => l !== '' && (!l.startsWith(';') || l === ';+++++'));
    expect(action(buildScript(archivedForm()))).toEqual(action(corpusText));
  });

  it('drops the environment-monitor statements when toggled off', () => {
    const form = archivedForm();
    form.env_monitor = false;
    const kinds = classify(buildScript(form));
    expect(kinds).toHaveLength(frozen.statement_count - 3);
    const names = kinds.filter((s) => s.kind === 'macro').map((s) => s.name);
    expect(names).not.toContain('uni_start');
    expect(checkpointIndices(buildScript(form))).toHaveLength(4);
  });

  it('drops the temperature block when no setpoint is given', () => {
    const form = archivedForm();
    form.temperature = null;
    const kinds = classify(buildScript(form));
    expect(kinds).toHaveLength(frozen.statement_count - 1);
    const names = kinds.filter((s) => s.kind === 'macro').map((s) => s.name);
    expect(names).not.toContain('temp_ist');
  });

  it('routes the detector pair into shutters and measurement', () => {
    const form = archivedForm();
    form.detectors = [2, 1];
    const text = buildScript(form);
    expect(text).toContain('shut_set(vanady1_1det,outbeam)');
    expect(text).toContain('shut_set(vanady1_2det,outbeam)');
    expect(text).toContain('meas_2sh(vanady1_2det,vanady1_1det,');
  });

  it('moves the vanadium standards into the beam on request', () => {
    const form = archivedForm();
    form.vanadium_out = false;
    const text = buildScript(form);
    expect(text).toContain('shut_set(vanady1_2det,inbeam)');
    expect(text).not.toContain('outbeam');
  });
});

describe('fuzzed forms', () => {
  it('every generated form validates and classifies cleanly', () => {
    for (let seed = 0; seed < 200; seed++) {
      const form = randomForm(seed);
      expect(validate(form, CONFIG)).toEqual([]);
      const text = buildScript(form);
      const kinds = classify(text);
      const expected = frozen.statement_count
        - (form.env_monitor ? 0 : 3)
        - (form.temperature != null ? 0 : 1);
      expect(kinds).toHaveLength(expected);
      expect(checkpointIndices(text)).toHaveLength(4);
      const macros = kinds.filter((s) => s.kind === 'macro');
      expect(macros.filter((s) => s.name === 'shut_set')).toHaveLength(4);
      expect(macros.filter((s) => s.name === 'meas_2sh')).toHaveLength(1);
    }
  });
});
