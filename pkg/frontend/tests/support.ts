/** Shared test data: the archived experiment's form and a seeded fuzzer. */

import type { ExperimentForm, FormConfig } from '../src/form.js';

export const CONFIG: FormConfig = { changer_size: 12, detectors: [1, 2] };

/** The form filled in exactly as for the archived measurement. */
export function archivedForm(): ExperimentForm {
  return {
    user: 'Balgavi',
    file_base: 'PB160502a',
    samples: [{ name: 'Hexane', position: 11, thickness_mm: 1 }],
    count_limit: 2000,
    time_limit: 1000,
    detectors: [1, 2],
    temperature: 25,
    temperature_tol: 1.0,
    vanadium_out: true,
    env_monitor: true,
  };
}

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const WORDS = ['Alpha', 'Bruker', 'Curie', 'Dubna', 'Erbium', 'Frank',
               'Glassy', 'Hexane', 'Ilmenite', 'Jacket'];

export function randomForm(seed: number,
                           config: FormConfig = CONFIG): ExperimentForm {
  const rnd = mulberry32(seed);
  const pick = <T>(xs: T[]): T => xs[Math.floor(rnd() * xs.length)];
  const int = (lo: number, hi: number) =>
    lo + Math.floor(rnd() * (hi - lo + 1));

  const positions = Array.from({ length: config.changer_size },
                               (_, i) => i + 1);
  for (let i = positions.length - 1; i > 0; i--) {
    const j = Math.floor(rnd() * (i + 1));
    [positions[i], positions[j]] = [positions[j], positions[i]];
  }
  const nSamples = int(1, Math.min(4, config.changer_size));
  const samples = positions.slice(0, nSamples).map((position, i) => ({
    name: rnd() < 0.3 ? `${pick(WORDS)} ${pick(WORDS)}` : `${pick(WORDS)}${i}`,
    position,
    thickness_mm: pick([0.5, 1, 2, 5]),
  }));
  const detectors: [number, number] = rnd() < 0.5 ? [1, 2] : [2, 1];
  return {
    user: rnd() < 0.3 ? `${pick(WORDS)} ${pick(WORDS)}` : pick(WORDS),
    file_base: `${pick(WORDS)}_${int(0, 999999)}`,
    samples,
    count_limit: int(1, 100000),
    time_limit: int(1, 100000),
    detectors,
    temperature: rnd() < 0.4 ? null : int(-50, 120),
    temperature_tol: pick([0.05, 0.1, 0.5, 1, 2.5]),
    vanadium_out: rnd() < 0.5,
    env_monitor: rnd() < 0.5,
  };
}
