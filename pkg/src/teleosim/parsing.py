"""Parsers for the robot/scene description format.

The format is a small brace language:

    robot arm {
      link base {}
      link upper {}
      joint shoulder { kind hinge; parent base; child upper;
                       origin 0 0 0.1  1 0 0 0; axis 0 0 1;
                       limits -3.14 3.14; vlimit 2.0; }
      sphere { link upper; center 0 0 0.2; radius 0.05; }
      site tip { link upper; offset 0 0 0.4; }
      gripper { kind parallel_jaw; sites a b c d;
                aperture_joint fingers; range 0 0.08; }
    }

Statements are word lists terminated by ';'. '#' starts a comment. Angles
are radians, lengths meters, quaternions scalar-first and normalized on
parse. Scene files use the same syntax with ``robot``, ``object``,
``randomize``, ``success`` and ``ik`` blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform, quat_normalize
from .model import (
    CollisionSphere,
    Gripper,
    Joint,
    Link,
    ModelError,
    ObjectSpec,
    PoseRandomization,
    RobotModel,
    SceneSpec,
    Site,
    SuccessPredicate,
)


class ParseError(ValueError):
    """Syntax error with source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


@dataclass
class _Token:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == "#":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "{};":
            tokens.append(_Token(c, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n{};#":
                i += 1
                col += 1
            tokens.append(_Token(text[start:i], line, start_col))
    return tokens


@dataclass
class Block:
    kind: str
    name: str | None
    line: int
    col: int
    statements: list[list[_Token]] = field(default_factory=list)
    children: list["Block"] = field(default_factory=list)

    def stmt(self, key: str, required: bool = True) -> list[_Token] | None:
        found = [s for s in self.statements if s[0].text == key]
        if not found:
            if required:
                raise ParseError(f"'{self.kind}' block is missing '{key}'",
                                 self.line, self.col)
            return None
        if len(found) > 1:
            t = found[1][0]
            raise ParseError(f"duplicate '{key}' statement", t.line, t.col)
        return found[0]


class _Reader:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self, expect: str | None = None) -> _Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("", 1, 1)
            raise ParseError("unexpected end of input", last.line, last.col)
        if expect is not None and tok.text != expect:
            raise ParseError(f"expected '{expect}', found '{tok.text}'",
                             tok.line, tok.col)
        self.pos += 1
        return tok

    def read_block(self) -> Block:
        head = self.next()
        if head.text in "{};":
            raise ParseError(f"expected block keyword, found '{head.text}'",
                             head.line, head.col)
        name = None
        tok = self.peek()
        if tok is not None and tok.text not in "{};":
            name = self.next().text
        self.next("{")
        block = Block(head.text, name, head.line, head.col)
        while True:
            tok = self.peek()
            if tok is None:
                raise ParseError(f"unterminated '{head.text}' block",
                                 head.line, head.col)
            if tok.text == "}":
                self.next()
                return block
            # Lookahead decides statement vs nested block.
            save = self.pos
            words: list[_Token] = []
            nested = False
            while True:
                t = self.peek()
                if t is None:
                    raise ParseError("unexpected end of input", tok.line, tok.col)
                if t.text == ";":
                    self.next()
                    break
                if t.text == "{":
                    nested = True
                    self.pos = save
                    break
                if t.text == "}":
                    raise ParseError("statement is missing ';'", t.line, t.col)
                words.append(self.next())
            if nested:
                block.children.append(self.read_block())
            else:
                if not words:
                    continue
                block.statements.append(words)


def _floats(tokens: list[_Token], count: int, what: str) -> np.ndarray:
    vals = tokens[1:]
    if len(vals) != count:
        t = tokens[0]
        raise ParseError(f"'{what}' expects {count} numbers, found {len(vals)}",
                         t.line, t.col)
    out = np.empty(count)
    for i, tok in enumerate(vals):
        try:
            out[i] = float(tok.text)
        except ValueError:
            raise ParseError(f"'{tok.text}' is not a number", tok.line, tok.col) from None
    return out


def _word(tokens: list[_Token], what: str) -> str:
    if len(tokens) != 2:
        t = tokens[0]
        raise ParseError(f"'{what}' expects one value", t.line, t.col)
    return tokens[1].text


def _words(tokens: list[_Token]) -> list[str]:
    return [t.text for t in tokens[1:]]


def _bool(tokens: list[_Token], what: str) -> bool:
    w = _word(tokens, what)
    if w not in ("true", "false"):
        t = tokens[1]
        raise ParseError(f"'{what}' expects true or false", t.line, t.col)
    return w == "true"


def _pose7(tokens: list[_Token], what: str) -> Transform:
    v = _floats(tokens, 7, what)
    return Transform(v[:3], quat_normalize(v[3:]))


def parse_robot(text: str) -> RobotModel:
    """Parse a robot description document into a validated RobotModel."""
    reader = _Reader(_tokenize(text))
    top = reader.read_block()
    if reader.peek() is not None:
        t = reader.peek()
        raise ParseError(f"trailing content '{t.text}' after robot block",
                         t.line, t.col)
    if top.kind != "robot":
        raise ParseError(f"expected 'robot' block, found '{top.kind}'",
                         top.line, top.col)
    if top.name is None:
        raise ParseError("robot block needs a name", top.line, top.col)

    links: list[Link] = []
    link_index: dict[str, int] = {}
    joints: list[Joint] = []
    joint_index: dict[str, int] = {}
    spheres: list[CollisionSphere] = []
    sites: list[Site] = []
    grippers: list[Gripper] = []

    def link_ref(tokens: list[_Token], what: str) -> int:
        name = _word(tokens, what)
        if name not in link_index:
            raise ModelError("dangling-link", f"unknown link '{name}'")
        return link_index[name]

    for child in top.children:
        if child.kind == "link":
            if child.name is None:
                raise ParseError("link needs a name", child.line, child.col)
            if child.name in link_index:
                raise ModelError("duplicate-link", f"link '{child.name}' defined twice")
            link_index[child.name] = len(links)
            links.append(Link(child.name))
        elif child.kind == "joint":
            if child.name is None:
                raise ParseError("joint needs a name", child.line, child.col)
            kind = _word(child.stmt("kind"), "kind")
            parent = link_ref(child.stmt("parent"), "parent")
            cidx = link_ref(child.stmt("child"), "child")
            origin = _pose7(child.stmt("origin"), "origin")
            axis_stmt = child.stmt("axis", required=kind != "fixed")
            axis = _floats(axis_stmt, 3, "axis") if axis_stmt else np.array([0.0, 0.0, 1.0])
            limits_stmt = child.stmt("limits", required=kind != "fixed")
            lo, hi = (_floats(limits_stmt, 2, "limits") if limits_stmt else (0.0, 0.0))
            vlimit_stmt = child.stmt("vlimit", required=kind != "fixed")
            v_lim = float(_floats(vlimit_stmt, 1, "vlimit")[0]) if vlimit_stmt else 0.0
            if child.name in joint_index:
                raise ModelError("duplicate-joint", f"joint '{child.name}' defined twice")
            joint_index[child.name] = len(joints)
            joints.append(Joint(child.name, kind, parent, cidx, origin,
                                np.asarray(axis, dtype=float), float(lo), float(hi), v_lim))
        elif child.kind == "sphere":
            spheres.append(CollisionSphere(
                link_ref(child.stmt("link"), "link"),
                _floats(child.stmt("center"), 3, "center"),
                float(_floats(child.stmt("radius"), 1, "radius")[0])))
        elif child.kind == "site":
            if child.name is None:
                raise ParseError("site needs a name", child.line, child.col)
            sites.append(Site(child.name,
                              link_ref(child.stmt("link"), "link"),
                              _floats(child.stmt("offset"), 3, "offset")))
        elif child.kind == "gripper":
            names = _words(child.stmt("sites"))
            ap_name = _word(child.stmt("aperture_joint"), "aperture_joint")
            if ap_name not in joint_index:
                raise ModelError("unknown-joint", f"aperture joint '{ap_name}' not defined")
            rng = _floats(child.stmt("range"), 2, "range")
            grippers.append(Gripper(_word(child.stmt("kind"), "kind"), names,
                                    joint_index[ap_name], (float(rng[0]), float(rng[1]))))
        else:
            raise ParseError(f"unknown block '{child.kind}' in robot",
                             child.line, child.col)

    model = RobotModel(name=top.name, links=links, joints=joints,
                       collision_spheres=spheres, sites=sites, grippers=grippers,
                       source_text=text)
    return model.validate()


def parse_scene(text: str) -> SceneSpec:
    """Parse a scene description document into a validated SceneSpec."""
    reader = _Reader(_tokenize(text))
    top = reader.read_block()
    if top.kind != "scene":
        raise ParseError(f"expected 'scene' block, found '{top.kind}'",
                         top.line, top.col)
    if top.name is None:
        raise ParseError("scene block needs a name", top.line, top.col)

    robot_refs: list[tuple[str, Transform]] = []
    objects: list[ObjectSpec] = []
    randomizations: list[PoseRandomization] = []
    success: SuccessPredicate | None = None
    ik_overrides: dict[str, float] = {}

    for child in top.children:
        if child.kind == "robot":
            if child.name is None:
                raise ParseError("robot reference needs a model id",
                                 child.line, child.col)
            base_stmt = child.stmt("base", required=False)
            base = _pose7(base_stmt, "base") if base_stmt else Transform.identity()
            robot_refs.append((child.name, base))
        elif child.kind == "object":
            if child.name is None:
                raise ParseError("object needs an id", child.line, child.col)
            shape = _word(child.stmt("shape"), "shape")
            ndims = {"box": 3, "sphere": 1, "cylinder": 2}.get(shape)
            if ndims is None:
                raise ModelError("bad-shape", f"object shape '{shape}'")
            grasp_stmt = child.stmt("graspable", required=False)
            support_stmt = child.stmt("support", required=False)
            objects.append(ObjectSpec(
                child.name, shape,
                _floats(child.stmt("dims"), ndims, "dims"),
                _pose7(child.stmt("pose"), "pose"),
                graspable=_bool(grasp_stmt, "graspable") if grasp_stmt else False,
                support=_bool(support_stmt, "support") if support_stmt else False))
        elif child.kind == "randomize":
            if child.name is None:
                raise ParseError("randomize needs an object id", child.line, child.col)
            yaw_stmt = child.stmt("yaw", required=False)
            yaw = _floats(yaw_stmt, 2, "yaw") if yaw_stmt is not None else np.zeros(2)
            randomizations.append(PoseRandomization(
                child.name,
                _floats(child.stmt("pos_lo"), 3, "pos_lo"),
                _floats(child.stmt("pos_hi"), 3, "pos_hi"),
                float(yaw[0]), float(yaw[1])))
        elif child.kind == "success":
            region = _floats(child.stmt("region"), 6, "region")
            success = SuccessPredicate(_word(child.stmt("object"), "object"),
                                       region[:3], region[3:])
        elif child.kind == "ik":
            for stmt in child.statements:
                ik_overrides[stmt[0].text] = float(_floats(stmt, 1, stmt[0].text)[0])
        else:
            raise ParseError(f"unknown block '{child.kind}' in scene",
                             child.line, child.col)

    return SceneSpec(top.name, robot_refs, objects, randomizations,
                     success, ik_overrides).validate()
