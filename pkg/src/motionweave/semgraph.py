"""Semantic graphs over motion descriptions.

A description is parsed into a three-level graph: one motion node (the
whole sentence), one action node per motion verb, and specific nodes for
the argument phrases attached to each verb. Edges carry one of twelve
semantic-role types. Parsing is grammar-first: deterministic chunking
rules that are exact on the synthetic corpus templates and best-effort on
free text.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .errors import NoActionFound


class EdgeType(enum.Enum):
    ARG0 = "ARG0"            # agent
    ARG1 = "ARG1"            # patient
    ARG2 = "ARG2"            # instrument, benefactive
    ARG3 = "ARG3"            # start point
    ARG4 = "ARG4"            # end point
    ARGM_LOC = "ARGM-LOC"    # location
    ARGM_MNR = "ARGM-MNR"    # manner
    ARGM_TMP = "ARGM-TMP"    # time
    ARGM_DIR = "ARGM-DIR"    # direction
    ARGM_ADV = "ARGM-ADV"    # miscellaneous
    ARGM_MA = "ARGM-MA"      # motion-action dependency
    OTHERS = "OTHERS"


N_EDGE_TYPES = len(EdgeType)
EDGE_TYPE_INDEX = {t: i for i, t in enumerate(EdgeType)}


@dataclass
class GraphNode:
    id: str
    kind: str               # "motion" | "action" | "specific"
    text: str
    token_span: tuple[int, int]


@dataclass
class GraphEdge:
    src: str
    dst: str
    type: EdgeType


@dataclass
class SemanticGraph:
    tokens: list[str]
    nodes: list[GraphNode] = field(default_factory=list)
    edges: list[GraphEdge] = field(default_factory=list)

    def node(self, node_id: str) -> GraphNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def motion_node(self) -> GraphNode:
        return next(n for n in self.nodes if n.kind == "motion")

    @property
    def action_nodes(self) -> list[GraphNode]:
        return [n for n in self.nodes if n.kind == "action"]

    @property
    def specific_nodes(self) -> list[GraphNode]:
        return [n for n in self.nodes if n.kind == "specific"]

    def edges_from(self, node_id: str) -> list[GraphEdge]:
        return [e for e in self.edges if e.src == node_id]

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "nodes": [{"id": n.id, "kind": n.kind, "text": n.text,
                       "token_span": list(n.token_span)} for n in self.nodes],
            "edges": [{"from": e.src, "to": e.dst, "type": e.type.value}
                      for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemanticGraph":
        g = cls(tokens=list(d["tokens"]))
        g.nodes = [GraphNode(n["id"], n["kind"], n["text"],
                             tuple(n["token_span"])) for n in d["nodes"]]
        g.edges = [GraphEdge(e["from"], e["to"], EdgeType(e["type"]))
                   for e in d["edges"]]
        return g


@dataclass(frozen=True)
class Lexicon:
    verbs: frozenset[str]
    adverbs: frozenset[str]
    directions: frozenset[str]
    prepositions: dict  # preposition -> EdgeType
    connectors: frozenset[str]


def _verb_forms(stems):
    forms = set()
    for stem in stems:
        forms.add(stem)
        if stem.endswith(("s", "sh", "ch", "x")):
            forms.add(stem + "es")
        else:
            forms.add(stem + "s")
    return forms


DEFAULT_LEXICON = Lexicon(
    verbs=frozenset(_verb_forms([
        "walk", "run", "jog", "march", "step", "stride",
        "raise", "lift", "lower", "wave", "swing", "stretch",
        "crouch", "squat", "kneel", "bend", "jump", "hop", "leap",
        "turn", "spin", "rotate", "twist", "sway", "kick", "punch",
        "look", "nod", "stand", "sit", "dance", "stumble", "stomp",
    ])),
    adverbs=frozenset([
        "slowly", "quickly", "briskly", "calmly", "gently",
        "lethargically", "energetically", "carefully", "steadily",
        "aimlessly", "twice", "once",
    ]),
    directions=frozenset([
        "forward", "forwards", "backward", "backwards", "ahead",
        "left", "leftward", "right", "rightward", "up", "upward",
        "upwards", "down", "downward", "downwards", "sideways",
        "clockwise", "counterclockwise",
    ]),
    prepositions={
        "towards": EdgeType.ARG4,
        "toward": EdgeType.ARG4,
        "to": EdgeType.ARG4,
        "from": EdgeType.ARG3,
        "in": EdgeType.ARGM_LOC,
        "on": EdgeType.ARGM_LOC,
        "around": EdgeType.ARGM_LOC,
        "with": EdgeType.ARG2,
        "while": EdgeType.ARGM_TMP,
        "before": EdgeType.ARGM_TMP,
        "after": EdgeType.ARGM_TMP,
    },
    connectors=frozenset(["and", "then"]),
)

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def parse(description: str, lexicon: Lexicon = DEFAULT_LEXICON) -> SemanticGraph:
    """Parse a motion description into a semantic graph.

    Raises NoActionFound when no token matches the verb lexicon.
    """
    tokens = tokenize(description)
    if not tokens:
        raise ValueError("empty description")
    verb_positions = [i for i, t in enumerate(tokens) if t in lexicon.verbs]
    if not verb_positions:
        raise NoActionFound(f"no motion verb in {description!r}")

    graph = SemanticGraph(tokens=tokens)
    motion = GraphNode("m0", "motion", " ".join(tokens), (0, len(tokens)))
    graph.nodes.append(motion)

    subject_span = None
    lead = tokens[:verb_positions[0]]
    if lead and not all(t in lexicon.connectors for t in lead):
        subject_span = (0, verb_positions[0])

    spec_counter = 0
    for k, vp in enumerate(verb_positions):
        action = GraphNode(f"a{k}", "action", tokens[vp], (vp, vp + 1))
        graph.nodes.append(action)
        graph.edges.append(GraphEdge(action.id, motion.id, EdgeType.ARGM_MA))

        if subject_span is not None:
            spec = GraphNode(f"s{spec_counter}", "specific",
                             " ".join(tokens[slice(*subject_span)]),
                             subject_span)
            spec_counter += 1
            graph.nodes.append(spec)
            graph.edges.append(GraphEdge(spec.id, action.id, EdgeType.ARG0))

        stop = verb_positions[k + 1] if k + 1 < len(verb_positions) else len(tokens)
        region_end = stop
        while region_end > vp + 1 and tokens[region_end - 1] in lexicon.connectors:
            region_end -= 1
        for span, role in _chunk_arguments(tokens, vp + 1, region_end, lexicon):
            spec = GraphNode(f"s{spec_counter}", "specific",
                             " ".join(tokens[slice(*span)]), span)
            spec_counter += 1
            graph.nodes.append(spec)
            graph.edges.append(GraphEdge(spec.id, action.id, role))
    return graph


def _chunk_arguments(tokens, start, end, lexicon):
    """Split a verb's argument region into (span, role) chunks."""
    chunks = []
    i = start
    saw_bare = False
    while i < end:
        t = tokens[i]
        if t in lexicon.connectors:
            i += 1
            continue
        if t in lexicon.prepositions:
            j = i + 1
            while j < end and tokens[j] not in lexicon.prepositions \
                    and tokens[j] not in lexicon.adverbs \
                    and tokens[j] not in lexicon.connectors:
                j += 1
            chunks.append(((i, j), lexicon.prepositions[t]))
            i = j
        elif t in lexicon.adverbs:
            chunks.append(((i, i + 1), EdgeType.ARGM_MNR))
            i += 1
        elif t in lexicon.directions:
            chunks.append(((i, i + 1), EdgeType.ARGM_DIR))
            i += 1
        else:
            # bare noun chunk; direction words inside it ("the left hand")
            # are ordinary modifiers, not ARGM-DIR
            j = i + 1
            while j < end and tokens[j] not in lexicon.prepositions \
                    and tokens[j] not in lexicon.adverbs \
                    and tokens[j] not in lexicon.connectors:
                j += 1
            role = EdgeType.ARG1 if not saw_bare else EdgeType.OTHERS
            saw_bare = True
            chunks.append(((i, j), role))
            i = j
    return chunks


def local_action_descriptions(graph: SemanticGraph) -> list[str]:
    """One standalone description per action node.

    Concatenates the action's agent phrase (default "a person"), the verb,
    and the remaining attached specifics in original word order.
    """
    out = []
    for action in graph.action_nodes:
        agent = "a person"
        rest = []
        for edge in graph.edges:
            if edge.dst != action.id:
                continue
            node = graph.node(edge.src)
            if node.kind != "specific":
                continue
            if edge.type is EdgeType.ARG0:
                agent = node.text
            else:
                rest.append(node)
        rest.sort(key=lambda n: n.token_span[0])
        words = [agent, action.text] + [n.text for n in rest]
        out.append(" ".join(words))
    return out


def validate(graph: SemanticGraph) -> list[str]:
    """All invariant violations found in the graph; empty means valid."""
    violations = []
    ids = [n.id for n in graph.nodes]
    if len(set(ids)) != len(ids):
        violations.append("duplicate node ids")
    known = set(ids)
    motions = [n for n in graph.nodes if n.kind == "motion"]
    if len(motions) == 0:
        violations.append("missing motion node")
    elif len(motions) > 1:
        violations.append("multiple motion nodes")
    actions = graph.action_nodes
    if not actions:
        violations.append("no action nodes")
    for e in graph.edges:
        if e.src not in known or e.dst not in known:
            violations.append(f"edge references unknown node: {e.src}->{e.dst}")
    if motions:
        motion_id = motions[0].id
        for a in actions:
            if not any(e.src == a.id and e.dst == motion_id for e in graph.edges):
                violations.append(f"action {a.id} not linked to motion node")
    for s in graph.specific_nodes:
        out_edges = graph.edges_from(s.id)
        if len(out_edges) == 0:
            violations.append(f"orphan specific {s.id}")
        elif len(out_edges) > 1:
            violations.append(f"specific {s.id} has multiple edges")
        elif graph.node(out_edges[0].dst).kind != "action":
            violations.append(f"specific {s.id} not attached to an action")
    n_tokens = len(graph.tokens)
    for n in graph.nodes:
        lo, hi = n.token_span
        if not (0 <= lo < hi <= n_tokens):
            violations.append(f"node {n.id} has invalid token span")
    return violations
