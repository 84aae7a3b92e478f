"""Declarative rule files and the validator that checks XML documents against them.

A rule file is itself a small XML document::

    <schema root="simulation">
      <element name="start_time" type="integer" min="0"/>
      <element name="random_seed" type="unsigned" minOccurs="0"/>
      <element name="mno" maxOccurs="unbounded">
        <element name="mno_id" type="integer"/>
      </element>
      <element name="movement_pattern">
        <choice>
          <element name="home_work" type="empty"/>
          ...
        </choice>
      </element>
      <check name="probability_sum" kind="sum" fields="p0 p1 p2" equals="1" tolerance="1e-9"/>
    </schema>

Scalar types: ``integer``, ``unsigned``, ``decimal``, ``boolean``, ``string``,
``enum`` (with ``values="a b c"``), ``empty`` and ``wkt``. An ``element`` with
nested ``element``/``choice`` children is complex. Children of a complex element
may appear in any order.

Checks (cross-field rules) are evaluated only when the fields they reference
are present and well typed, so a single defect is reported once.
"""

from __future__ import annotations

import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

SCALAR_TYPES = {"integer", "unsigned", "decimal", "boolean", "string", "enum", "empty", "wkt"}
CHECK_KINDS = {"sum", "less", "requires", "unique"}

_INT_RE = re.compile(r"^[+-]?\d+$")
_UINT_RE = re.compile(r"^\+?\d+$")


class DocumentParseError(ValueError):
    """The document is not well-formed markup (distinct from a schema violation)."""


class SchemaDefinitionError(ValueError):
    """The rule file itself is malformed."""


@dataclass(frozen=True)
class Issue:
    path: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: [{self.rule}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def is_valid(self) -> bool:
        return not self.issues

    @property
    def rules(self) -> set[str]:
        return {issue.rule for issue in self.issues}

    def to_dict(self) -> dict:
        return {
            "is_valid": self.is_valid,
            "issues": [
                {"path": i.path, "rule": i.rule, "message": i.message} for i in self.issues
            ],
        }


@dataclass
class AttributeRule:
    name: str
    type: str = "string"
    required: bool = False
    values: tuple[str, ...] = ()


@dataclass
class CheckRule:
    name: str
    kind: str
    fields: tuple[str, ...]
    equals: float | None = None
    tolerance: float = 0.0
    when: tuple[str, str] | None = None


@dataclass
class ElementRule:
    name: str
    type: str = "string"
    min_occurs: int = 1
    max_occurs: int | None = 1
    minimum: float | None = None
    maximum: float | None = None
    min_exclusive: float | None = None
    max_exclusive: float | None = None
    values: tuple[str, ...] = ()
    children: list[ElementRule] = field(default_factory=list)
    choices: list[ChoiceRule] = field(default_factory=list)
    attributes: list[AttributeRule] = field(default_factory=list)
    checks: list[CheckRule] = field(default_factory=list)

    @property
    def is_complex(self) -> bool:
        return self.type == "complex"

    def all_children(self) -> list[ElementRule]:
        out = list(self.children)
        for choice in self.choices:
            out.extend(choice.members)
        return out

    def child(self, name: str) -> ElementRule | None:
        for c in self.all_children():
            if c.name == name:
                return c
        return None


@dataclass
class ChoiceRule:
    members: list[ElementRule]
    min_occurs: int = 1
    max_occurs: int = 1


@dataclass
class Schema:
    root: ElementRule
    source: str = ""

    def child_order(self, rule: ElementRule | None = None) -> list[str]:
        rule = rule or self.root
        return [c.name for c in rule.all_children()]


# -- rule-file loading --------------------------------------------------------


def _opt_float(node: ET.Element, attr: str) -> float | None:
    raw = node.get(attr)
    return None if raw is None else float(raw)


def _load_element(node: ET.Element) -> ElementRule:
    name = node.get("name")
    if not name:
        raise SchemaDefinitionError("element rule without a name")
    max_raw = node.get("maxOccurs", "1")
    rule = ElementRule(
        name=name,
        type=node.get("type", "string"),
        min_occurs=int(node.get("minOccurs", "1")),
        max_occurs=None if max_raw == "unbounded" else int(max_raw),
        minimum=_opt_float(node, "min"),
        maximum=_opt_float(node, "max"),
        min_exclusive=_opt_float(node, "minExclusive"),
        max_exclusive=_opt_float(node, "maxExclusive"),
        values=tuple(node.get("values", "").split()),
    )
    _load_body(node, rule)
    if rule.children or rule.choices:
        rule.type = "complex"
    elif rule.type not in SCALAR_TYPES:
        raise SchemaDefinitionError(f"element {name!r}: unknown type {rule.type!r}")
    return rule


def _load_body(node: ET.Element, rule: ElementRule) -> None:
    for sub in node:
        if sub.tag == "element":
            rule.children.append(_load_element(sub))
        elif sub.tag == "choice":
            members = [_load_element(m) for m in sub if m.tag == "element"]
            rule.choices.append(
                ChoiceRule(
                    members,
                    int(sub.get("minOccurs", "1")),
                    int(sub.get("maxOccurs", "1")),
                )
            )
        elif sub.tag == "attribute":
            rule.attributes.append(
                AttributeRule(
                    sub.get("name", ""),
                    sub.get("type", "string"),
                    sub.get("required", "false") == "true",
                    tuple(sub.get("values", "").split()),
                )
            )
        elif sub.tag == "check":
            kind = sub.get("kind", "")
            if kind not in CHECK_KINDS:
                raise SchemaDefinitionError(f"unknown check kind {kind!r}")
            when = None
            if sub.get("when"):
                key, _, value = sub.get("when", "").partition("=")
                when = (key, value)
            rule.checks.append(
                CheckRule(
                    name=sub.get("name", kind),
                    kind=kind,
                    fields=tuple(sub.get("fields", "").split()),
                    equals=_opt_float(sub, "equals"),
                    tolerance=float(sub.get("tolerance", "0")),
                    when=when,
                )
            )
        else:
            raise SchemaDefinitionError(f"unexpected rule node <{sub.tag}>")


def load_schema(path: str | Path) -> Schema:
    path = Path(path)
    try:
        tree = ET.parse(path)
    except ET.ParseError as exc:
        raise SchemaDefinitionError(f"{path}: {exc}") from exc
    top = tree.getroot()
    if top.tag != "schema" or not top.get("root"):
        raise SchemaDefinitionError(f"{path}: expected <schema root=...>")
    root = ElementRule(name=top.get("root", ""), type="complex")
    _load_body(top, root)
    return Schema(root=root, source=str(path))


# -- document loading ---------------------------------------------------------


def parse_document(path: str | Path) -> ET.ElementTree:
    """Parse ``path`` as XML; ``OSError`` propagates, bad markup raises ``DocumentParseError``."""
    data = Path(path).read_bytes()
    return parse_document_bytes(data, str(path))


def parse_document_bytes(data: bytes, label: str = "<bytes>") -> ET.ElementTree:
    if b"<!DOCTYPE" in data or b"<!ENTITY" in data:
        raise DocumentParseError(f"{label}: DTDs and entity declarations are not supported")
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise DocumentParseError(f"{label}: {exc}") from exc
    for node in root.iter():
        if "}" in node.tag or any("}" in k for k in node.attrib):
            raise DocumentParseError(f"{label}: namespaces are not supported ({node.tag})")
    return ET.ElementTree(root)


# -- validation ---------------------------------------------------------------


def _scalar_issue(rule: ElementRule, text: str) -> tuple[str, str] | None:
    """Return (rule, message) for a bad scalar, or None."""
    kind = rule.type
    if kind == "empty":
        return ("type", "element must be empty") if text else None
    if kind == "string":
        return None
    if kind == "enum":
        if text not in rule.values:
            return "enum", f"{text!r} not in {{{', '.join(rule.values)}}}"
        return None
    if kind == "boolean":
        if text not in ("true", "false", "1", "0"):
            return "type", f"{text!r} is not a boolean"
        return None
    if kind == "wkt":
        from mnsim.geometry import GeometryError, parse_wkt

        try:
            parse_wkt(text)
        except GeometryError as exc:
            return "type", f"invalid WKT: {exc}"
        return None
    if kind == "integer" and not _INT_RE.match(text):
        return "type", f"{text!r} is not an integer"
    if kind == "unsigned" and not _UINT_RE.match(text):
        return "type", f"{text!r} is not an unsigned integer"
    try:
        value = float(text)
    except ValueError:
        return "type", f"{text!r} is not a number"
    if not math.isfinite(value):
        return "type", f"{text!r} is not a finite number"
    if rule.minimum is not None and value < rule.minimum:
        return "range", f"{text} < minimum {rule.minimum:g}"
    if rule.maximum is not None and value > rule.maximum:
        return "range", f"{text} > maximum {rule.maximum:g}"
    if rule.min_exclusive is not None and value <= rule.min_exclusive:
        return "range", f"{text} must be > {rule.min_exclusive:g}"
    if rule.max_exclusive is not None and value >= rule.max_exclusive:
        return "range", f"{text} must be < {rule.max_exclusive:g}"
    return None


def _text(node: ET.Element) -> str:
    return (node.text or "").strip()


class _Validator:
    def __init__(self) -> None:
        self.issues: list[Issue] = []
        # ids of nodes whose scalar value failed validation
        self.bad: set[int] = set()

    def add(self, path: str, rule: str, message: str) -> None:
        self.issues.append(Issue(path, rule, message))

    def element(self, node: ET.Element, rule: ElementRule, path: str) -> None:
        self._attributes(node, rule, path)
        if not rule.is_complex:
            if len(node):
                self.add(path, "type", f"scalar element <{rule.name}> has child elements")
                self.bad.add(id(node))
                return
            problem = _scalar_issue(rule, _text(node))
            if problem:
                self.bad.add(id(node))
                self.add(path, *problem)
            return
        if _text(node):
            self.add(path, "type", f"complex element <{rule.name}> carries text")
        groups: dict[str, list[ET.Element]] = {}
        for child in node:
            groups.setdefault(child.tag, []).append(child)
        known = {c.name for c in rule.all_children()}
        for tag in groups:
            if tag not in known:
                self.add(f"{path}/{tag}", "unknown_element", f"<{tag}> is not allowed in <{rule.name}>")
        for child_rule in rule.children:
            self._occurrences(groups.get(child_rule.name, []), child_rule, path)
        for choice in rule.choices:
            present = [m for m in choice.members if m.name in groups]
            names = "|".join(m.name for m in choice.members)
            if len(present) < choice.min_occurs:
                self.add(path, "required", f"one of <{names}> is required")
            elif len(present) > choice.max_occurs:
                self.add(path, "cardinality", f"at most {choice.max_occurs} of <{names}> allowed")
            for member in present:
                self._occurrences(groups[member.name], member, path)
        for check in rule.checks:
            self._check(node, check, path)

    def _occurrences(self, nodes: list[ET.Element], rule: ElementRule, parent: str) -> None:
        n = len(nodes)
        if n < rule.min_occurs:
            if n == 0:
                self.add(f"{parent}/{rule.name}", "required", f"missing required element <{rule.name}>")
            else:
                self.add(f"{parent}/{rule.name}", "cardinality", f"<{rule.name}> occurs {n} < {rule.min_occurs} times")
        if rule.max_occurs is not None and n > rule.max_occurs:
            self.add(f"{parent}/{rule.name}", "cardinality", f"<{rule.name}> occurs {n} > {rule.max_occurs} times")
        many = rule.max_occurs is None or rule.max_occurs > 1
        for i, child in enumerate(nodes, start=1):
            path = f"{parent}/{rule.name}[{i}]" if many else f"{parent}/{rule.name}"
            self.element(child, rule, path)

    def _attributes(self, node: ET.Element, rule: ElementRule, path: str) -> None:
        declared = {a.name: a for a in rule.attributes}
        for key in node.attrib:
            if key not in declared:
                self.add(f"{path}/@{key}", "unknown_attribute", f"attribute {key!r} not allowed")
        for attr in rule.attributes:
            value = node.get(attr.name)
            if value is None:
                if attr.required:
                    self.add(f"{path}/@{attr.name}", "required", f"missing attribute {attr.name!r}")
                continue
            if attr.type == "enum" and value not in attr.values:
                self.add(f"{path}/@{attr.name}", "enum", f"{value!r} not in {{{', '.join(attr.values)}}}")

    def _field(self, node: ET.Element, name: str) -> ET.Element | None:
        found = node.find(name)
        if found is None or id(found) in self.bad:
            return None
        return found

    def _check(self, node: ET.Element, check: CheckRule, path: str) -> None:
        if check.kind == "sum":
            values = []
            for name in check.fields:
                found = self._field(node, name)
                if found is None:
                    return
                values.append(float(_text(found)))
            total = math.fsum(values)
            if abs(total - (check.equals or 0.0)) > check.tolerance:
                self.add(path, check.name, f"{' + '.join(check.fields)} = {total:g}, expected {check.equals:g}")
        elif check.kind == "less":
            lo, hi = (self._field(node, name) for name in check.fields)
            if lo is None or hi is None:
                return
            if not float(_text(lo)) < float(_text(hi)):
                self.add(path, check.name, f"{check.fields[0]} must be < {check.fields[1]}")
        elif check.kind == "requires":
            assert check.when is not None
            key, expected = check.when
            cond = self._field(node, key)
            if cond is None or _text(cond) != expected:
                return
            for name in check.fields:
                if node.find(name) is None:
                    self.add(f"{path}/{name}", check.name, f"<{name}> is required when {key}={expected}")
        elif check.kind == "unique":
            for target in check.fields:
                seen: dict[str, int] = {}
                for found in node.findall(target):
                    if id(found) in self.bad:
                        continue
                    value = _text(found)
                    seen[value] = seen.get(value, 0) + 1
                for value, count in sorted(seen.items()):
                    if count > 1:
                        self.add(path, check.name, f"{target} value {value!r} occurs {count} times")


def validate_tree(tree: ET.ElementTree | ET.Element, schema: Schema) -> ValidationReport:
    root = tree.getroot() if isinstance(tree, ET.ElementTree) else tree
    v = _Validator()
    if root.tag != schema.root.name:
        v.add(f"/{root.tag}", "root", f"expected root <{schema.root.name}>, found <{root.tag}>")
    else:
        v.element(root, schema.root, f"/{root.tag}")
    return ValidationReport(tuple(v.issues))
