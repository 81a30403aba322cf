"""Rule language: parsing, validation, classification and size measurement.

A rule is one base clause (removal order + bucket expression) followed by
zero or more configuration guards::

    order=ltr; bucket=any
    order=any; bucket=map(blue:left, red:right, default:any)
    order=any; bucket=any; when at(7, red) then move=3, bucket=right

Keywords are case-insensitive, whitespace is free-form and ``--`` starts a
comment running to end of line.  The language deliberately has no way to
refer to rejected attempts: every expressible rule decides legality from the
board, the success history and the initial configuration only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

PALETTE = ("red", "green", "blue", "yellow")
PALETTE_LETTERS = "RGBY"
EMPTY_CELL = "."

COLOR_TO_LETTER = {name: letter for name, letter in zip(PALETTE, PALETTE_LETTERS)}
LETTER_TO_COLOR = {letter: name for name, letter in zip(PALETTE, PALETTE_LETTERS)}


class Bucket(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class Order(enum.Enum):
    ANY = "any"
    LEFT_TO_RIGHT = "ltr"
    RIGHT_TO_LEFT = "rtl"
    OUTSIDE_IN_LEFT = "outside-in-left"
    OUTSIDE_IN_RIGHT = "outside-in-right"


class SimpleBucket(enum.Enum):
    ANY = "any"
    LEFT = "left"
    RIGHT = "right"
    NEAREST = "nearest"
    FARTHEST = "farthest"
    ALTERNATE = "alternate"


@dataclass(frozen=True)
class ColorMap:
    """Bucket expression mapping piece color to a simple bucket expression.

    Entries are stored sorted by color name; ``default`` makes the map a
    total function over colors.  Nesting is not representable (entries hold
    simple expressions only).
    """

    entries: tuple[tuple[str, SimpleBucket], ...]
    default: SimpleBucket

    def lookup(self, color: str) -> SimpleBucket:
        for name, sub in self.entries:
            if name == color:
                return sub
        return self.default


BucketExpr = SimpleBucket | ColorMap


@dataclass(frozen=True)
class Clause:
    order: Order
    bucket: BucketExpr


@dataclass(frozen=True)
class AtTrigger:
    """Fires when the initial configuration has `color` at `position`."""

    position: int
    color: str

    def sort_key(self) -> tuple:
        return (0, self.position, self.color)


@dataclass(frozen=True)
class ConfigTrigger:
    """Fires when the initial configuration equals `pattern` exactly."""

    pattern: str

    def sort_key(self) -> tuple:
        return (1, self.pattern)


Trigger = AtTrigger | ConfigTrigger


@dataclass(frozen=True)
class ConfigGuard:
    """When triggered, constrains exactly the move_index-th successful move.

    For an AT trigger the guarded piece (the one initially at the trigger
    position) must be that success and go into `bucket`; it may not be moved
    at any other index.  For a CONFIG trigger only the bucket of the
    move_index-th success is constrained.
    """

    trigger: Trigger
    move_index: int
    bucket: Bucket


class HistoryClass(enum.Enum):
    STATIC = "static"
    LAST_SUCCESS = "last-success"
    LAST_SUCCESS_PER_COLOR = "last-success-per-color"
    CONFIG_GUARDED = "config-guarded"


@dataclass(frozen=True)
class RuleAst:
    """Parsed rule: base clause, guards (sorted by trigger), mentioned colors."""

    base: Clause
    guards: tuple[ConfigGuard, ...]
    palette: tuple[str, ...]


@dataclass(frozen=True)
class SizeMetric:
    term_count: int
    codebook_count: int
    canonical_bytes: int


@dataclass
class ValidationReport:
    ok: bool
    history_class: HistoryClass
    warnings: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    failure_blind: bool = True


class RuleParseError(ValueError):
    """Syntax or semantic error in rule text, with 1-based line/column."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


# --- Tokenizer --------------------------------------------------------------

_PUNCT = set("=;(),:")
_WORD_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ.")
_WORD_CONT = _WORD_START | set("0123456789-")

_ORDER_KEYWORDS = {o.value: o for o in Order}
_SIMPLE_KEYWORDS = {s.value: s for s in SimpleBucket}
_BUCKET_KEYWORDS = {b.value: b for b in Bucket}


@dataclass(frozen=True)
class _Token:
    kind: str  # "word" | "int" | "punct" | "eof"
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_col = col
        if ch in _PUNCT:
            tokens.append(_Token("punct", ch, line, start_col))
            i += 1
            col += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(_Token("int", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch in _WORD_START:
            j = i
            while j < n and text[j] in _WORD_CONT:
                j += 1
            tokens.append(_Token("word", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        raise RuleParseError(f"unexpected character {ch!r}", line, start_col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


# --- Parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]) -> None:
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def fail(self, expected: str, tok: _Token | None = None) -> RuleParseError:
        tok = tok or self.peek()
        found = f"{tok.text!r}" if tok.kind != "eof" else "end of input"
        return RuleParseError(f"expected {expected}, found {found}", tok.line, tok.column)

    def expect_punct(self, ch: str) -> _Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != ch:
            raise self.fail(f"'{ch}'")
        return self.advance()

    def expect_keyword(self, keyword: str, describe: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != "word" or tok.text.lower() != keyword:
            raise self.fail(describe or f"'{keyword}'")
        return self.advance()

    def expect_int(self, describe: str) -> int:
        tok = self.peek()
        if tok.kind != "int":
            raise self.fail(describe)
        value = int(tok.text)
        if value < 1:
            raise RuleParseError(f"{describe} must be >= 1, got {value}", tok.line, tok.column)
        self.advance()
        return value

    def expect_color(self) -> str:
        tok = self.peek()
        if tok.kind != "word":
            raise self.fail("color name")
        name = tok.text.lower()
        if name not in PALETTE:
            raise RuleParseError(
                f"unknown color name {tok.text!r} (colors: {', '.join(PALETTE)})",
                tok.line,
                tok.column,
            )
        self.advance()
        return name

    # rule := clause { ";" guard }
    def parse_rule(self) -> RuleAst:
        clause = self.parse_clause()
        guards: list[ConfigGuard] = []
        while self.peek().kind == "punct" and self.peek().text == ";":
            self.advance()
            if self.peek().kind == "eof":
                break  # tolerate a trailing semicolon
            guards.append(self.parse_guard())
        tok = self.peek()
        if tok.kind != "eof":
            raise self.fail("';' or end of rule")
        seen: set[Trigger] = set()
        for guard in guards:
            if guard.trigger in seen:
                raise RuleParseError(
                    f"duplicate guard trigger {_trigger_text(guard.trigger)!r}",
                    tok.line,
                    tok.column,
                )
            seen.add(guard.trigger)
        guards.sort(key=lambda g: g.trigger.sort_key())
        base = Clause(clause[0], clause[1])
        return RuleAst(base=base, guards=tuple(guards), palette=_mentioned_colors(base, guards))

    # clause := "order" "=" order ";" "bucket" "=" bucket
    def parse_clause(self) -> tuple[Order, BucketExpr]:
        self.expect_keyword("order", "order clause")
        self.expect_punct("=")
        tok = self.peek()
        if tok.kind != "word" or tok.text.lower() not in _ORDER_KEYWORDS:
            raise self.fail("order keyword (any, ltr, rtl, outside-in-left, outside-in-right)")
        order = _ORDER_KEYWORDS[self.advance().text.lower()]
        self.expect_punct(";")
        self.expect_keyword("bucket", "bucket clause")
        self.expect_punct("=")
        return order, self.parse_bucket()

    # bucket := simple | "map" "(" entry { "," entry } "," "default" ":" simple ")"
    def parse_bucket(self) -> BucketExpr:
        tok = self.peek()
        if tok.kind != "word":
            raise self.fail("bucket expression")
        word = tok.text.lower()
        if word == "map":
            self.advance()
            return self.parse_map()
        if word in _SIMPLE_KEYWORDS:
            self.advance()
            return _SIMPLE_KEYWORDS[word]
        raise self.fail("bucket keyword (any, left, right, nearest, farthest, alternate, map)")

    def parse_map(self) -> ColorMap:
        self.expect_punct("(")
        entries: list[tuple[str, SimpleBucket]] = []
        default: SimpleBucket | None = None
        while True:
            tok = self.peek()
            if tok.kind == "word" and tok.text.lower() == "default":
                self.advance()
                self.expect_punct(":")
                default = self.parse_simple()
                break
            color_tok = self.peek()
            color = self.expect_color()
            if any(name == color for name, _ in entries):
                raise RuleParseError(
                    f"duplicate map entry for color {color!r}", color_tok.line, color_tok.column
                )
            self.expect_punct(":")
            entries.append((color, self.parse_simple()))
            self.expect_punct(",")
        self.expect_punct(")")
        if not entries:
            raise self.fail("at least one color entry before 'default'")
        entries.sort(key=lambda e: e[0])
        return ColorMap(entries=tuple(entries), default=default)

    def parse_simple(self) -> SimpleBucket:
        tok = self.peek()
        if tok.kind != "word" or tok.text.lower() not in _SIMPLE_KEYWORDS:
            raise self.fail("bucket keyword (any, left, right, nearest, farthest, alternate)")
        return _SIMPLE_KEYWORDS[self.advance().text.lower()]

    # guard := "when" trigger "then" "move" "=" INT "," "bucket" "=" ("left"|"right")
    def parse_guard(self) -> ConfigGuard:
        self.expect_keyword("when", "guard ('when ...')")
        trigger = self.parse_trigger()
        self.expect_keyword("then")
        self.expect_keyword("move")
        self.expect_punct("=")
        move_index = self.expect_int("move index")
        self.expect_punct(",")
        self.expect_keyword("bucket")
        self.expect_punct("=")
        tok = self.peek()
        if tok.kind != "word" or tok.text.lower() not in _BUCKET_KEYWORDS:
            raise self.fail("'left' or 'right'")
        bucket = _BUCKET_KEYWORDS[self.advance().text.lower()]
        return ConfigGuard(trigger=trigger, move_index=move_index, bucket=bucket)

    # trigger := "at" "(" INT "," color ")" | "config" "(" PATTERN ")"
    def parse_trigger(self) -> Trigger:
        tok = self.peek()
        if tok.kind != "word":
            raise self.fail("trigger ('at' or 'config')")
        word = tok.text.lower()
        if word == "at":
            self.advance()
            self.expect_punct("(")
            position = self.expect_int("position")
            self.expect_punct(",")
            color = self.expect_color()
            self.expect_punct(")")
            return AtTrigger(position=position, color=color)
        if word == "config":
            self.advance()
            self.expect_punct("(")
            pat_tok = self.peek()
            if pat_tok.kind != "word":
                raise self.fail("board pattern")
            pattern = pat_tok.text.upper()
            bad = sorted(set(pattern) - set(PALETTE_LETTERS + EMPTY_CELL))
            if bad:
                raise RuleParseError(
                    f"pattern may only use {PALETTE_LETTERS} and '{EMPTY_CELL}', found {bad[0]!r}",
                    pat_tok.line,
                    pat_tok.column,
                )
            self.advance()
            self.expect_punct(")")
            return ConfigTrigger(pattern=pattern)
        raise self.fail("trigger ('at' or 'config')")


def _mentioned_colors(base: Clause, guards: list[ConfigGuard]) -> tuple[str, ...]:
    mentioned: set[str] = set()
    if isinstance(base.bucket, ColorMap):
        mentioned.update(name for name, _ in base.bucket.entries)
    for guard in guards:
        if isinstance(guard.trigger, AtTrigger):
            mentioned.add(guard.trigger.color)
        else:
            for letter in guard.trigger.pattern:
                if letter in LETTER_TO_COLOR:
                    mentioned.add(LETTER_TO_COLOR[letter])
    return tuple(name for name in PALETTE if name in mentioned)


def parse_rule(text: str) -> RuleAst:
    """Parse rule text into a RuleAst; raises RuleParseError with line/column."""
    return _Parser(_tokenize(text)).parse_rule()


# --- Canonical form ---------------------------------------------------------


def _trigger_text(trigger: Trigger) -> str:
    if isinstance(trigger, AtTrigger):
        return f"at({trigger.position}, {trigger.color})"
    return f"config({trigger.pattern})"


def _bucket_text(bucket: BucketExpr) -> str:
    if isinstance(bucket, ColorMap):
        entries = ", ".join(f"{name}:{sub.value}" for name, sub in bucket.entries)
        return f"map({entries}, default:{bucket.default.value})"
    return bucket.value


def canonical_form(ast: RuleAst) -> str:
    """Deterministic serialization; parse(canonical_form(ast)) == ast."""
    parts = [f"order={ast.base.order.value}; bucket={_bucket_text(ast.base.bucket)}"]
    for guard in ast.guards:
        parts.append(
            f"when {_trigger_text(guard.trigger)} then"
            f" move={guard.move_index}, bucket={guard.bucket.value}"
        )
    return "; ".join(parts)


# --- Analysis ---------------------------------------------------------------


def classify_history(ast: RuleAst) -> HistoryClass:
    """Which part of play history the rule consults (guards dominate)."""
    if ast.guards:
        return HistoryClass.CONFIG_GUARDED
    bucket = ast.base.bucket
    if bucket is SimpleBucket.ALTERNATE:
        return HistoryClass.LAST_SUCCESS
    if isinstance(bucket, ColorMap):
        slots = [sub for _, sub in bucket.entries] + [bucket.default]
        if SimpleBucket.ALTERNATE in slots:
            return HistoryClass.LAST_SUCCESS_PER_COLOR
    return HistoryClass.STATIC


def references_failures(ast: RuleAst) -> bool:
    """Grammar audit: no production can consult rejected attempts.

    Walks every node kind the language has; none carries failure
    information, so this is constantly False for any parseable rule.
    """
    _ = (ast.base.order, ast.base.bucket, ast.guards)
    return False


def rule_size(ast: RuleAst) -> SizeMetric:
    """MDL-style size: AST node count, distinct leaf symbols, canonical bytes."""
    terms = 1  # the rule node itself
    terms += 1  # order atom
    symbols: set[str] = {ast.base.order.value}
    bucket = ast.base.bucket
    if isinstance(bucket, ColorMap):
        terms += 1  # map node
        for name, sub in bucket.entries:
            terms += 2  # color atom + bucket atom
            symbols.add(name)
            symbols.add(sub.value)
        terms += 1  # default atom
        symbols.add(bucket.default.value)
    else:
        terms += 1  # bucket atom
        symbols.add(bucket.value)
    for guard in ast.guards:
        terms += 1  # guard node
        if isinstance(guard.trigger, AtTrigger):
            terms += 3  # trigger node + position atom + color atom
            symbols.add(str(guard.trigger.position))
            symbols.add(guard.trigger.color)
        else:
            terms += 2  # trigger node + pattern atom
            symbols.add(guard.trigger.pattern)
        terms += 2  # move-index atom + bucket atom
        symbols.add(str(guard.move_index))
        symbols.add(guard.bucket.value)
    canonical = canonical_form(ast)
    return SizeMetric(
        term_count=terms,
        codebook_count=len(symbols),
        canonical_bytes=len(canonical.encode("utf-8")),
    )


def validate(ast: RuleAst, params) -> ValidationReport:
    """Check a parsed rule against episode parameters.

    Errors make the rule unusable for those parameters (guard positions or
    patterns that do not fit the board, move indices no episode can reach).
    Warnings flag guards that can contradict the base clause and triggers
    that can never fire with the configured color count.
    """
    errors: list[str] = []
    warnings: list[str] = []
    L, kmax, colors = params.L, params.Kmax, params.C
    generated = set(PALETTE[:colors])

    for guard in ast.guards:
        tag = _trigger_text(guard.trigger)
        if guard.move_index > kmax:
            errors.append(
                f"guard {tag}: move index {guard.move_index} exceeds maximum piece count {kmax}"
            )
        if isinstance(guard.trigger, AtTrigger):
            position = guard.trigger.position
            if position > L:
                errors.append(f"guard {tag}: position out of range 1..{L}")
                continue
            if guard.trigger.color not in generated:
                warnings.append(
                    f"guard {tag} can never fire: color {guard.trigger.color!r}"
                    f" is not generated with C={colors}"
                )
            _warn_guard_conflicts(ast, guard, position, L, warnings)
        else:
            pattern = guard.trigger.pattern
            if len(pattern) != L:
                errors.append(
                    f"guard {tag}: pattern length {len(pattern)} does not match board length {L}"
                )
                continue
            letters = {ch for ch in pattern if ch != EMPTY_CELL}
            dead = sorted(letters - {COLOR_TO_LETTER[c] for c in generated})
            if dead:
                warnings.append(
                    f"guard {tag} can never fire: pattern uses {','.join(dead)}"
                    f" but only {colors} color(s) are generated"
                )

    if isinstance(ast.base.bucket, ColorMap):
        for name, _ in ast.base.bucket.entries:
            if name not in generated:
                warnings.append(f"map entry for {name!r} is unreachable with C={colors}")

    return ValidationReport(
        ok=not errors,
        history_class=classify_history(ast),
        warnings=warnings,
        errors=errors,
        failure_blind=not references_failures(ast),
    )


def _warn_guard_conflicts(
    ast: RuleAst, guard: ConfigGuard, position: int, L: int, warnings: list[str]
) -> None:
    tag = _trigger_text(guard.trigger)
    order = ast.base.order
    # Under a strict scan order the guarded piece is forced out as soon as it
    # becomes the extreme piece; demanding a later index can be unsatisfiable.
    if order is Order.LEFT_TO_RIGHT and position < guard.move_index:
        warnings.append(
            f"guard {tag} demands move {guard.move_index} of the piece at position"
            f" {position}, but left-to-right order can force it earlier"
        )
    if order is Order.RIGHT_TO_LEFT and (L + 1 - position) < guard.move_index:
        warnings.append(
            f"guard {tag} demands move {guard.move_index} of the piece at position"
            f" {position}, but right-to-left order can force it earlier"
        )
    # A fixed base bucket that contradicts the guard bucket stalls the episode
    # whenever the guard triggers.
    bucket = ast.base.bucket
    sub = bucket.lookup(guard.trigger.color) if isinstance(bucket, ColorMap) else bucket
    fixed = {SimpleBucket.LEFT: Bucket.LEFT, SimpleBucket.RIGHT: Bucket.RIGHT}.get(sub)
    if fixed is not None and fixed is not guard.bucket:
        warnings.append(
            f"guard {tag} demands bucket={guard.bucket.value} but the base clause"
            f" sends that color to {fixed.value}"
        )
    if sub in (SimpleBucket.NEAREST, SimpleBucket.FARTHEST):
        d_left, d_right = position, L + 1 - position
        if sub is SimpleBucket.NEAREST:
            allowed = {b for b, d in ((Bucket.LEFT, d_left), (Bucket.RIGHT, d_right)) if d == min(d_left, d_right)}
        else:
            allowed = {b for b, d in ((Bucket.LEFT, d_left), (Bucket.RIGHT, d_right)) if d == max(d_left, d_right)}
        if guard.bucket not in allowed:
            warnings.append(
                f"guard {tag} demands bucket={guard.bucket.value} but the base clause"
                f" sends position {position} to {'/'.join(sorted(b.value for b in allowed))}"
            )
