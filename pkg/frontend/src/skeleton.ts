/**
 * Shape-level classification of a control script.
 *
 * The console never interprets scripts; the kernel does.  But the form
 * generator promises a particular statement skeleton, and tests pin that
 * promise by classifying each line the same way the kernel's parser does.
 */

export type StatementKind =
  | 'comment'
  | 'checkpoint'
  | 'setvar'
  | 'ask'
  | 'device'
  | 'macro';

export interface ClassifiedStatement {
  kind: StatementKind;
  /** Macro name for kind 'macro', device name for kind 'device'. */
  name?: string;
}

const IDENT = '[A-Za-z_][A-Za-z0-9_]*';
const SETVAR_RE = new RegExp(`^#set\\s+@(${IDENT})\\s+(\\S.*)$`);
const ASK_RE =
  new RegExp(`^#ask\\s+@(${IDENT})\\s+(\\S+)(?:\\s+"([^"]*)")?$`);
const DEVICE_RE = new RegExp(`^(${IDENT})\\s*:\\s*(.*)$`);
const IDENT_RE = new RegExp(`^${IDENT}$`);
const MACRO_CALL_RE = new RegExp(`^(${IDENT})\\s*\\(.*\\)$`);

/** Resume markers are exactly this line, nothing more. */
export const CHECKPOINT_LINE = ';+++++';

export class SkeletonError extends Error {
  constructor(public line: number, message: string) {
    super(`line ${line}: ${message}`);
    this.name = 'SkeletonError';
  }
}

/**
 * Classify every statement in a script.  Blank lines vanish, exactly as
 * they do when the kernel parses the same text, so indices here line up
 * with kernel statement indices.
 */
export function classify(text: string): ClassifiedStatement[] {
  const out: ClassifiedStatement[] = [];
  const lines = text.split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (line === '') continue;
    if (line === CHECKPOINT_LINE) {
      out.push({ kind: 'checkpoint' });
      continue;
    }
    if (line.startsWith(';')) {
      out.push({ kind: 'comment' });
      continue;
    }
    let m: RegExpMatchArray | null;
    if (line.startsWith('#')) {
      if ((m = line.match(SETVAR_RE))) {
        out.push({ kind: 'setvar', name: m[1] });
        continue;
      }
      if ((m = line.match(ASK_RE))) {
        out.push({ kind: 'ask', name: m[1] });
        continue;
      }
      throw new SkeletonError(i + 1, `unrecognized directive: ${line}`);
    }
    if ((m = line.match(DEVICE_RE))) {
      // the command after the colon must itself be a bare name
      const command = m[2].trim().split(/\s+/)[0] ?? '';
      if (!IDENT_RE.test(command)) {
        throw new SkeletonError(i + 1, `bad device command: ${line}`);
      }
      out.push({ kind: 'device', name: m[1] });
      continue;
    }
    if ((m = line.match(MACRO_CALL_RE)) || (m = line.match(IDENT_RE))) {
      const name = m[1] ?? m[0];
      out.push({ kind: 'macro', name });
      continue;
    }
    throw new SkeletonError(i + 1, `unrecognized statement: ${line}`);
  }
  return out;
}

/** Statement indices of the resume markers, matching kernel numbering. */
export function checkpointIndices(text: string): number[] {
  const idx: number[] = [];
  classify(text).forEach((s, i) => {
    if (s.kind === 'checkpoint') idx.push(i);
  });
  return idx;
}
