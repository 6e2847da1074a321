"""GraphML I/O for behaviour flows (yEd-compatible profile).

Reading is tolerant: plain GraphML or yEd output, with node labels taken
from a ``label`` data key or from a yEd ``<y:NodeLabel>``. Trigger JSON
lives in the reserved ``d_trigger`` data key (attr.name ``trigger``); when
absent, a node ``description`` whose text starts with ``{`` is parsed as the
trigger (yEd preserves descriptions but drops unknown custom keys).

Writing is canonical: same flow in, byte-identical document out.
"""

from __future__ import annotations

import json
from xml.etree import ElementTree as ET
from xml.sax.saxutils import escape, quoteattr

from .errors import ExpressionSyntaxError, FlowLoadError
from .flows import AgentSchema, BehaviourFlow, FlowNode, TriggerSpec, trigger_from_json_obj

GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"
YWORKS_NS = "http://www.yworks.com/xml/graphml"


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _children(element: ET.Element, name: str) -> list[ET.Element]:
    return [child for child in element if _local(child.tag) == name]


def load_flow(document: str) -> BehaviourFlow:
    """Parse GraphML text into a BehaviourFlow.

    Raises FlowLoadError for malformed XML, duplicate node ids, edges to
    unknown nodes, malformed trigger JSON, or unparsable trigger expressions
    (reported with the offending node id). Structural problems such as
    cycles or a missing start node are left to ``validate_flow``.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise FlowLoadError(f"malformed XML: {exc}", "XML") from None
    if _local(root.tag) != "graphml":
        raise FlowLoadError("document root is not <graphml>", "XML")

    label_keys, trigger_keys, description_keys, agent_type_keys = set(), set(), set(), set()
    for key in _children(root, "key"):
        key_id = key.get("id")
        attr_name = key.get("attr.name")
        if attr_name == "label":
            label_keys.add(key_id)
        if key_id == "d_trigger" or attr_name == "trigger":
            trigger_keys.add(key_id)
        if attr_name == "description":
            description_keys.add(key_id)
        if attr_name == "agent_type":
            agent_type_keys.add(key_id)

    graphs = _children(root, "graph")
    if not graphs:
        raise FlowLoadError("document contains no <graph>", "XML")
    if len(graphs) > 1:
        raise FlowLoadError("document contains more than one <graph>", "XML")
    graph = graphs[0]

    agent_type = None
    for data in _children(graph, "data"):
        if data.get("key") in agent_type_keys and data.text:
            agent_type = data.text.strip()

    nodes: list[FlowNode] = []
    seen_ids: set[str] = set()
    start_trigger_ignored = False
    for el in _children(graph, "node"):
        node_id = el.get("id")
        if node_id is None:
            raise FlowLoadError("node without an id", "NODE_ID")
        if node_id in seen_ids:
            raise FlowLoadError(f"duplicate node id {node_id!r}", "DUPLICATE_NODE", node_id)
        seen_ids.add(node_id)
        if _children(el, "graph"):
            raise FlowLoadError("nested graphs are not supported", "XML", node_id)

        label = _node_label(el, label_keys)
        raw_trigger = _node_trigger_text(el, trigger_keys, description_keys)
        is_start = label is not None and label.strip().lower() == "start"
        if is_start:
            if raw_trigger is not None:
                start_trigger_ignored = True
            trigger = TriggerSpec.constant_one()
        elif raw_trigger is None:
            trigger = TriggerSpec.constant_one()
        else:
            trigger = _parse_trigger(raw_trigger, node_id)
        nodes.append(FlowNode(node_id, label, trigger))

    edges: list[tuple[str, str]] = []
    for el in _children(graph, "edge"):
        source = el.get("source")
        target = el.get("target")
        if source is None or target is None:
            raise FlowLoadError("edge without source/target", "EDGE")
        for endpoint in (source, target):
            if endpoint not in seen_ids:
                raise FlowLoadError(
                    f"edge references unknown node {endpoint!r}", "UNKNOWN_NODE"
                )
        edges.append((source, target))

    return BehaviourFlow(
        nodes=nodes,
        edges=edges,
        agent_type=agent_type,
        start_trigger_ignored=start_trigger_ignored,
    )


def _node_label(el: ET.Element, label_keys: set[str]) -> str | None:
    for data in _children(el, "data"):
        if data.get("key") in label_keys and data.text and data.text.strip():
            return data.text.strip()
    # yEd stores the visible label inside the nodegraphics payload
    for data in _children(el, "data"):
        for sub in data.iter():
            if _local(sub.tag) == "NodeLabel" and sub.text and sub.text.strip():
                return sub.text.strip()
    return None


def _node_trigger_text(
    el: ET.Element, trigger_keys: set[str], description_keys: set[str]
) -> str | None:
    for data in _children(el, "data"):
        if data.get("key") in trigger_keys and data.text and data.text.strip():
            return data.text
    for data in _children(el, "data"):
        if data.get("key") in description_keys and data.text:
            text = data.text.strip()
            if text.startswith("{"):
                return text
    return None


def _parse_trigger(raw: str, node_id: str) -> TriggerSpec:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FlowLoadError(
            f"trigger data is not valid JSON: {exc}", "TRIGGER_MALFORMED", node_id
        ) from None
    try:
        return trigger_from_json_obj(obj)
    except ExpressionSyntaxError as exc:
        raise FlowLoadError(
            f"trigger expression does not parse: {exc}", "TRIGGER_EXPRESSION", node_id
        ) from None
    except ValueError as exc:
        raise FlowLoadError(str(exc), "TRIGGER_MALFORMED", node_id) from None


# ---------------------------------------------------------------------------
# Canonical writer
# ---------------------------------------------------------------------------

def _trigger_json(spec: TriggerSpec) -> str:
    return json.dumps(spec.to_json_obj(), separators=(", ", ": "))


def save_flow(flow: BehaviourFlow) -> str:
    """Serialize canonically: stable ordering, stable ids, stable bytes."""
    w: list[str] = []
    w.append('<?xml version="1.0" encoding="UTF-8"?>')
    w.append(
        f'<graphml xmlns="{GRAPHML_NS}" xmlns:y="{YWORKS_NS}">'
    )
    w.append('  <key id="d_label" for="node" attr.name="label" attr.type="string"/>')
    w.append('  <key id="d_trigger" for="node" attr.name="trigger" attr.type="string"/>')
    w.append('  <key id="d_agent_type" for="graph" attr.name="agent_type" attr.type="string"/>')
    w.append('  <key id="d_graphics" for="node" yfiles.type="nodegraphics"/>')
    w.append('  <graph id="G" edgedefault="directed">')
    if flow.agent_type:
        w.append(f'    <data key="d_agent_type">{escape(flow.agent_type)}</data>')
    for node in flow.nodes:
        w.append(f"    <node id={quoteattr(node.id)}>")
        if node.label is not None:
            w.append(f'      <data key="d_label">{escape(node.label)}</data>')
        if not node.is_start:
            w.append(
                f'      <data key="d_trigger">{escape(_trigger_json(node.trigger))}</data>'
            )
        if node.label is not None:
            w.append('      <data key="d_graphics">')
            w.append("        <y:ShapeNode>")
            w.append(f"          <y:NodeLabel>{escape(node.label)}</y:NodeLabel>")
            w.append("        </y:ShapeNode>")
            w.append("      </data>")
        w.append("    </node>")
    for i, (source, target) in enumerate(flow.edges):
        w.append(
            f'    <edge id="e{i}" source={quoteattr(source)} target={quoteattr(target)}/>'
        )
    w.append("  </graph>")
    w.append("</graphml>")
    w.append("")
    return "\n".join(w)


def emit_skeleton_flow(schema: AgentSchema) -> str:
    """A start node plus one unlinked node per behaviour, triggers constant 1.

    The result loads back with zero errors and one unreachable-node warning
    per behaviour node; domain experts wire the edges in a graph editor.
    """
    nodes = [FlowNode("n0", "start", TriggerSpec.constant_one())]
    for i, behaviour in enumerate(sorted(schema.behaviours), start=1):
        nodes.append(FlowNode(f"n{i}", behaviour, TriggerSpec.constant_one()))
    flow = BehaviourFlow(nodes=nodes, edges=[], agent_type=schema.agent_type)
    return save_flow(flow)
