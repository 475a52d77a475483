"""Measurement script language: parser, pretty-printer, resumable interpreter.

The language is line-oriented, one statement per line:

    ;anything            comment
    ;+++++               checkpoint marker (resume anchor), exactly six chars
    #set @name value     bind a script variable
    #ask @name dflt "p"  ask the operator, binding name to the reply
    Dev: cmd a b         device command (whitespace after the colon optional)
    macro(a,b) / macro   macro-command call

Arguments starting with `@` are variable references, substituted at
execution time; anything else is an opaque literal token.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Callable, Generator

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_IDENT_RE = re.compile(_IDENT + r"\Z")
_DEVICE_RE = re.compile(rf"({_IDENT})\s*:\s*(.*)\Z")
_MACRO_RE = re.compile(rf"({_IDENT})\s*\((.*)\)\s*\Z")
_MACRO_OPEN_RE = re.compile(rf"{_IDENT}\s*\(")
_ASK_RE = re.compile(rf"#ask\s+@({_IDENT})\s+(\S+)(?:\s+\"([^\"]*)\")?\s*\Z")
_SET_RE = re.compile(rf"#set\s+@({_IDENT})\s+(\S.*?)\s*\Z")

CHECKPOINT_MARK = ";+++++"


class ScriptError(Exception):
    pass


class ParseError(ScriptError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnboundVariable(ScriptError):
    pass


class DispatchError(ScriptError):
    """Unknown device or macro name."""


class NotWaiting(ScriptError):
    pass


# -- syntax tree ---------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    text: str

    def render(self) -> str:
        return self.text


@dataclass(frozen=True)
class VarRef:
    name: str

    def render(self) -> str:
        return "@" + self.name


Arg = Literal | VarRef


class Statement:
    pass


@dataclass(frozen=True)
class Comment(Statement):
    text: str
    source_line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Checkpoint(Statement):
    ordinal: int
    source_line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class SetVar(Statement):
    name: str
    arg: Arg
    source_line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Ask(Statement):
    name: str
    default: Arg
    prompt: str
    source_line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class DeviceCmd(Statement):
    device: str
    command: str
    args: tuple
    source_line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class MacroCall(Statement):
    name: str
    args: tuple
    source_line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Program:
    statements: tuple
    checkpoints: tuple  # statement indices of Checkpoint statements
    source_hash: str

    def __len__(self) -> int:
        return len(self.statements)


# -- parsing -------------------------------------------------------------


def _parse_arg(token: str, lineno: int) -> Arg:
    token = token.strip()
    if not token:
        raise ParseError(lineno, "empty argument")
    if token.startswith("@"):
        name = token[1:]
        if not _IDENT_RE.match(name):
            raise ParseError(lineno, f"bad variable reference {token!r}")
        return VarRef(name)
    return Literal(token)


def _parse_line(line: str, lineno: int, ordinal: int) -> Statement:
    if line == CHECKPOINT_MARK:
        return Checkpoint(ordinal, source_line=lineno)
    if line.startswith(";"):
        return Comment(line[1:], source_line=lineno)
    if line.startswith("#"):
        m = _SET_RE.match(line)
        if m:
            return SetVar(m.group(1), _parse_arg(m.group(2), lineno),
                          source_line=lineno)
        m = _ASK_RE.match(line)
        if m:
            return Ask(m.group(1), _parse_arg(m.group(2), lineno),
                       m.group(3) or "", source_line=lineno)
        raise ParseError(lineno, f"bad # directive: {line!r}")
    m = _DEVICE_RE.match(line)
    if m:
        device, rest = m.group(1), m.group(2).strip()
        if not rest:
            raise ParseError(lineno, "empty device command")
        tokens = rest.split()
        command = tokens[0]
        if not _IDENT_RE.match(command):
            raise ParseError(lineno, f"bad device command name {command!r}")
        args = tuple(_parse_arg(t, lineno) for t in tokens[1:])
        return DeviceCmd(device, command, args, source_line=lineno)
    m = _MACRO_RE.match(line)
    if m:
        name, inner = m.group(1), m.group(2)
        if inner.strip() == "":
            return MacroCall(name, (), source_line=lineno)
        args = tuple(_parse_arg(t, lineno) for t in inner.split(","))
        return MacroCall(name, args, source_line=lineno)
    if _IDENT_RE.match(line):
        return MacroCall(line, (), source_line=lineno)
    if _MACRO_OPEN_RE.match(line):
        raise ParseError(lineno, "unterminated call")
    raise ParseError(lineno, f"unrecognized statement: {line!r}")


def parse(text: str) -> Program:
    statements = []
    checkpoints = []
    ordinal = 0
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == CHECKPOINT_MARK:
            ordinal += 1
        stmt = _parse_line(line, lineno, ordinal)
        if isinstance(stmt, Checkpoint):
            checkpoints.append(len(statements))
        statements.append(stmt)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return Program(tuple(statements), tuple(checkpoints), digest)


# -- rendering -----------------------------------------------------------


def render_statement(stmt: Statement) -> str:
    if isinstance(stmt, Checkpoint):
        return CHECKPOINT_MARK
    if isinstance(stmt, Comment):
        return ";" + stmt.text
    if isinstance(stmt, SetVar):
        return f"#set @{stmt.name} {stmt.arg.render()}"
    if isinstance(stmt, Ask):
        return f'#ask @{stmt.name} {stmt.default.render()} "{stmt.prompt}"'
    if isinstance(stmt, DeviceCmd):
        head = f"{stmt.device}: {stmt.command}"
        if stmt.args:
            head += " " + " ".join(a.render() for a in stmt.args)
        return head
    if isinstance(stmt, MacroCall):
        if not stmt.args:
            return stmt.name
        return f"{stmt.name}({','.join(a.render() for a in stmt.args)})"
    raise TypeError(f"not a statement: {stmt!r}")


def render(program: Program) -> str:
    if not program.statements:
        return ""
    return "\n".join(render_statement(s) for s in program.statements) + "\n"


# -- execution -----------------------------------------------------------


def substitute(arg: Arg, env: dict[str, str]) -> str:
    if isinstance(arg, Literal):
        return arg.text
    if arg.name not in env:
        raise UnboundVariable(arg.name)
    return env[arg.name]


def resume_point(program: Program, last_completed: int | None) -> int:
    """Index of the nearest checkpoint at or before last_completed, else 0."""
    if last_completed is None:
        return 0
    best = 0
    for idx in program.checkpoints:
        if idx <= last_completed:
            best = idx
        else:
            break
    return best


@dataclass
class ExecState:
    source_hash: str
    last_completed: int | None = None
    env: dict = field(default_factory=dict)
    status: str = "idle"  # idle|running|waiting|finished|aborted
    question: tuple | None = None  # (name, prompt, default)
    abort_reason: str = ""
    current: int | None = None


class Interpreter:
    """Executes a Program as a simulation task, mirroring state to the db.

    The engine supplies `device_task(device, command, args)` and
    `macro_task(name, args)` generator factories and raises DispatchError
    for unknown names.  State lives under /script/* so that a database
    snapshot alone suffices to resume a run.
    """

    def __init__(self, program: Program, sim, db, engine,
                 env: dict[str, str] | None = None,
                 on_statement_done: Callable | None = None,
                 on_checkpoint: Callable | None = None):
        self.program = program
        self.sim = sim
        self.db = db
        self.engine = engine
        self.state = ExecState(program.source_hash, env=dict(env or {}))
        self.on_statement_done = on_statement_done
        self.on_checkpoint = on_checkpoint
        self._answer_waiter = None
        self._hold = False
        self._hold_waiter = None
        self._writer = "script"

    # -- db mirroring --

    def _put(self, path: str, value) -> None:
        self.db.set_var(path, value, self._writer)

    def mirror_status(self) -> None:
        st = self.state
        self._put("/script/status", st.status)
        self._put("/script/last_completed",
                  -1 if st.last_completed is None else st.last_completed)
        self._put("/script/abort_reason", st.abort_reason)

    def _mirror_question(self) -> None:
        q = self.state.question or ("", "", "")
        self._put("/script/question/name", q[0])
        self._put("/script/question/prompt", q[1])
        self._put("/script/question/default", q[2])

    # -- statement execution --

    def _bind(self, name: str, value: str) -> None:
        self.state.env[name] = value
        self._put(f"/script/vars/{name}", value)

    def _exec(self, stmt: Statement) -> Generator:
        env = self.state.env
        if isinstance(stmt, (Comment, Checkpoint)):
            return
        if isinstance(stmt, SetVar):
            self._bind(stmt.name, substitute(stmt.arg, env))
            return
        if isinstance(stmt, Ask):
            default = substitute(stmt.default, env)
            self.state.question = (stmt.name, stmt.prompt, default)
            self.state.status = "waiting"
            self._mirror_question()
            self.mirror_status()
            self._answer_waiter = self.sim.waiter()
            reply = yield self._answer_waiter
            self._answer_waiter = None
            self._bind(stmt.name, reply if reply else default)
            self.state.question = None
            self.state.status = "running"
            self._mirror_question()
            self.mirror_status()
            return
        if isinstance(stmt, DeviceCmd):
            args = [substitute(a, env) for a in stmt.args]
            yield from self.engine.device_task(stmt.device, stmt.command, args)
            return
        if isinstance(stmt, MacroCall):
            args = [substitute(a, env) for a in stmt.args]
            yield from self.engine.macro_task(stmt.name, args)
            return
        raise TypeError(f"not a statement: {stmt!r}")

    def step_task(self, index: int) -> Generator:
        """Execute statement `index`; completion is durable once mirrored."""
        stmt = self.program.statements[index]
        self.state.current = index
        self._put("/script/current", index)
        yield from self._exec(stmt)
        self.state.last_completed = index
        self._put("/script/last_completed", index)
        # checkpoint hook first: the anchor it captures must be part of
        # whatever the statement-done hook persists
        if isinstance(stmt, Checkpoint) and self.on_checkpoint is not None:
            self.on_checkpoint(index, stmt.ordinal)
        if self.on_statement_done is not None:
            self.on_statement_done(index, stmt)

    def run_task(self, from_index: int = 0) -> Generator:
        """Run to the end (or abort); returns the terminal ExecState."""
        st = self.state
        st.status = "running"
        self.mirror_status()
        try:
            index = from_index
            while index < len(self.program.statements):
                while self._hold:
                    self._hold_waiter = self.sim.waiter()
                    yield self._hold_waiter
                yield from self.step_task(index)
                index += 1
                # zero-delay yield so every statement boundary is an event
                # boundary; faults injected "after statement k" then take
                # effect before statement k+1 starts
                yield 0.0
        except Exception as exc:  # noqa: BLE001 - any engine failure aborts the run
            st.status = "aborted"
            st.abort_reason = str(exc) or type(exc).__name__
            self.mirror_status()
            return st
        st.status = "finished"
        self.mirror_status()
        return st

    # -- operator-facing controls --

    def answer(self, value: str) -> None:
        if self.state.status != "waiting" or self._answer_waiter is None:
            raise NotWaiting("no question pending")
        self._answer_waiter.complete(value)

    def pause(self) -> None:
        self._hold = True
        self._put("/script/hold", 1)

    def unpause(self) -> None:
        self._hold = False
        self._put("/script/hold", 0)
        if self._hold_waiter is not None:
            self._hold_waiter.complete(None)
            self._hold_waiter = None

    # -- convenience for tests and simple embedding --

    def run(self, from_index: int = 0) -> ExecState:
        task = self.sim.spawn(self.run_task(from_index), name="script")
        return self.sim.run_until_task(task)


def env_from_db(db) -> dict[str, str]:
    """Rebuild the interpreter environment from /script/vars/* mirrors."""
    env = {}
    for path in db.list_vars("/script/vars"):
        env[path.segments[-1]] = db.get_var(path).value.data
    return env
