/**
 * The strict experiment dialogue: a validated form and the script it
 * generates.  The generator only knows one shape of experiment; anything
 * beyond it belongs in a hand-written script.
 */
export const FILE_BASE_RE = /^[A-Za-z0-9_]+$/;
/** Free-text fields end up as macro arguments, so they must stay inside
 * one argument token: no commas, no newlines, and a letter up front so
 * they can never be read as a directive or variable reference. */
const NAME_RE = /^[A-Za-z][^,\n]*$/;
export function validate(form, config) {
    const errors = [];
    const bad = (field, message) => errors.push({ field, message });
    if (!NAME_RE.test(form.user.trim())) {
        bad('user', 'user name must start with a letter and contain no commas');
    }
    if (!FILE_BASE_RE.test(form.file_base)) {
        bad('file_base', 'file base must match [A-Za-z0-9_]+');
    }
    if (form.samples.length === 0) {
        bad('samples', 'at least one sample is required');
    }
    const seen = new Set();
    form.samples.forEach((s, i) => {
        const at = `samples[${i}]`;
        if (!NAME_RE.test(s.name.trim())) {
            bad(at, 'sample name must start with a letter and contain no commas');
        }
        if (!Number.isInteger(s.position) || s.position < 1
            || s.position > config.changer_size) {
            bad(at, `position must be an integer in 1..${config.changer_size}`);
        }
        else if (seen.has(s.position)) {
            bad(at, `position ${s.position} used twice`);
        }
        seen.add(s.position);
        if (!(s.thickness_mm > 0)) {
            bad(at, 'cuvette thickness must be positive');
        }
    });
    if (!Number.isInteger(form.count_limit) || form.count_limit <= 0) {
        bad('count_limit', 'count limit must be a positive integer');
    }
    if (!Number.isInteger(form.time_limit) || form.time_limit <= 0) {
        bad('time_limit', 'time limit must be a positive integer');
    }
    const [da, db] = form.detectors;
    if (da === db || !config.detectors.includes(da)
        || !config.detectors.includes(db)) {
        bad('detectors', `detector pair must be two distinct of `
            + `${JSON.stringify(config.detectors)}`);
    }
    if (form.temperature != null && !Number.isFinite(form.temperature)) {
        bad('temperature', 'temperature setpoint must be a number');
    }
    if (!(form.temperature_tol > 0)) {
        bad('temperature_tol', 'temperature tolerance must be positive');
    }
    return errors;
}
/** Virtual beam time: every generated run is stamped with the epoch the
 * kernel clock starts from, keeping reruns byte-comparable. */
const RUN_DATE = '15.05.2002';
/** Tolerances read as reals even when whole: 1 renders as "1.0". */
const fmtReal = (v) => Number.isInteger(v) ? v.toFixed(1) : String(v);
/**
 * Emit the typical-experiment script for a validated form.
 *
 * The emitted statement sequence is fixed: header comments, self test,
 * protocol files, registration, environment monitor start, output file
 * binding, vanadium shutters, temperature block, the two-shutter
 * measurement pass, and shutdown, with resume markers between phases.
 */
export function buildScript(form) {
    const base = form.file_base;
    const lower = base.toLowerCase();
    const [da, db] = form.detectors;
    const beam = form.vanadium_out ? 'outbeam' : 'inbeam';
    const first = form.samples[0];
    const sampleList = form.samples
        .map((s) => `${s.name.trim()}@${s.position}`)
        .join(' | ');
    const lines = [
        ';*****',
        `;Measurements:${RUN_DATE},${form.user.trim()}`,
        `;samples: ${sampleList}`,
        `;environment monitoring ${form.env_monitor ? 'on' : 'off'}`,
        `; ***** ${first.thickness_mm}mm cuvettes *****`,
        ';+++++',
        ';',
        'auto_test',
        ';',
        'Motor:open_prot',
        `Tofa:open_prot txt/${lower}.txt`,
        `Temp:open_prot txt/${lower}t.txt`,
    ];
    if (form.env_monitor) {
        lines.push(`Unipa:open_prot txt/${lower}u.txt`);
    }
    lines.push('Motor:getpos', ';', `usf_set(${form.user.trim()},${first.name.trim()},${base})`, ';', ';Task for checking of unipa-parameters', ';');
    if (form.env_monitor) {
        lines.push('uni_start(test)');
    }
    lines.push(';+++++', `#set @filename ${base}`, 'Tofa: file @filename', ';+++++', `shut_set(vanady1_${db}det,${beam})`, `shut_set(vanady1_${da}det,${beam})`, `shut_set(vanady2_${db}det,${beam})`, `shut_set(vanady2_${da}det,${beam})`, ';', ';+++++');
    if (form.temperature != null) {
        lines.push(`temp_ist(${fmtReal(form.temperature_tol)},`
            + `${fmtReal(2 * form.temperature_tol)},test,${form.temperature})`);
    }
    lines.push('Tofa:flagoff temperature', ';-----', `;start with measuring of sample number ${first.position}`, `meas_2sh(vanady1_${da}det,vanady1_${db}det,${form.count_limit},`
        + `${form.time_limit},${form.samples.length},${first.position}, #.$09)`, ';-----');
    if (form.env_monitor) {
        lines.push('Unipa: stop');
    }
    lines.push('; ----- eof -----');
    return lines.join('\n') + '\n';
}
