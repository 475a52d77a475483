/**
 * View model for the run panel.  Pure state in, render hints out, so the
 * whole operator-facing behaviour is testable without a DOM or a socket.
 */
export const LOST_BANNER = 'remote control lost - measurement continues';
export class RunView {
    loaded = false;
    statements = 0;
    checkpoints = [];
    parseError = null;
    status = 'idle';
    lastCompleted = -1;
    simTime = '';
    crashCount = 0;
    blocked = false;
    connected = false;
    /** One-line notice for abnormal conditions; null when all is well. */
    banner = null;
    applyLoadReply(reply) {
        if (reply.ok) {
            this.loaded = true;
            this.statements = reply.statements ?? 0;
            this.checkpoints = reply.checkpoints ?? [];
            this.parseError = null;
            this.banner = null; // stale crash notices end with the previous run
        }
        else {
            this.loaded = false;
            this.statements = 0;
            this.checkpoints = [];
            this.parseError = reply.error ?? 'script rejected';
        }
    }
    applyStatus(reply) {
        this.connected = true;
        if (reply.crash_count > this.crashCount) {
            this.banner = `kernel crashed and restarted `
                + `(count ${reply.crash_count}) - run resumed from last checkpoint`;
        }
        else if (reply.blocked) {
            this.banner = LOST_BANNER;
        }
        else if (this.banner === LOST_BANNER) {
            this.banner = null;
        }
        this.crashCount = reply.crash_count;
        this.blocked = reply.blocked;
        this.status = reply.status;
        this.lastCompleted = reply.last_completed;
        this.simTime = reply.time;
        this._question = reply.question;
    }
    connectionLost() {
        this.connected = false;
        // the kernel keeps the beam time; only our window into it died
        this.banner = LOST_BANNER;
    }
    _question = null;
    /** The question panel shows only while the interpreter truly waits. */
    get question() {
        if (this.status !== 'waiting' || !this.connected)
            return null;
        return this._question;
    }
    get startEnabled() {
        return (this.loaded && this.connected && this.parseError === null
            && this.status !== 'running' && this.status !== 'waiting');
    }
    get running() {
        return this.status === 'running' || this.status === 'waiting';
    }
    /** 0..1 progress over statements, or null before a script is loaded. */
    get progress() {
        if (!this.loaded || this.statements === 0)
            return null;
        return Math.min(1, (this.lastCompleted + 1) / this.statements);
    }
}
