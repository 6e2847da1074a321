/** SVG line charts for metric series. Only collected ticks are plotted —
 * no interpolation; null cells break the line into segments. Every marker
 * carries its exact payload value in data attributes so tests (and curious
 * users) can read the numbers straight off the DOM. */

export interface Series {
  runId: string;
  ticks: number[];
  values: Array<number | null>;
}

const WIDTH = 560;
const HEIGHT = 220;
const MARGIN = { top: 12, right: 16, bottom: 24, left: 48 };
const COLOURS = ["#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2"];

const SVG_NS = "http://www.w3.org/2000/svg";

function scale(
  value: number,
  domain: [number, number],
  range: [number, number],
): number {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  if (d1 === d0) return (r0 + r1) / 2;
  return r0 + ((value - d0) / (d1 - d0)) * (r1 - r0);
}

export function renderMetricChart(metric: string, series: Series[]): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("class", "metric-chart");
  svg.dataset.metric = metric;

  const allTicks = series.flatMap((s) => s.ticks);
  const allValues = series.flatMap((s) => s.values.filter((v): v is number => v !== null));
  if (allTicks.length === 0 || allValues.length === 0) {
    const empty = document.createElementNS(SVG_NS, "text");
    empty.setAttribute("x", String(WIDTH / 2));
    empty.setAttribute("y", String(HEIGHT / 2));
    empty.textContent = "no data";
    svg.appendChild(empty);
    return svg;
  }
  const xDomain: [number, number] = [Math.min(...allTicks), Math.max(...allTicks)];
  const yDomain: [number, number] = [
    Math.min(0, Math.min(...allValues)),
    Math.max(...allValues),
  ];
  const xRange: [number, number] = [MARGIN.left, WIDTH - MARGIN.right];
  const yRange: [number, number] = [HEIGHT - MARGIN.bottom, MARGIN.top];

  const axis = document.createElementNS(SVG_NS, "path");
  axis.setAttribute(
    "d",
    `M ${MARGIN.left} ${MARGIN.top} V ${HEIGHT - MARGIN.bottom} H ${WIDTH - MARGIN.right}`,
  );
  axis.setAttribute("class", "axis");
  axis.setAttribute("fill", "none");
  axis.setAttribute("stroke", "#9ca3af");
  svg.appendChild(axis);

  series.forEach((s, index) => {
    const colour = COLOURS[index % COLOURS.length];
    const group = document.createElementNS(SVG_NS, "g");
    group.setAttribute("class", "run-series");
    group.dataset.runId = s.runId;

    let segment: string[] = [];
    const flush = () => {
      if (segment.length > 1) {
        const line = document.createElementNS(SVG_NS, "polyline");
        line.setAttribute("points", segment.join(" "));
        line.setAttribute("fill", "none");
        line.setAttribute("stroke", colour);
        line.setAttribute("stroke-width", "1.5");
        group.appendChild(line);
      }
      segment = [];
    };
    s.ticks.forEach((tick, i) => {
      const value = s.values[i];
      if (value === null || value === undefined) {
        flush(); // nulls break the line; nothing is interpolated
        return;
      }
      const x = scale(tick, xDomain, xRange);
      const y = scale(value, yDomain, yRange);
      segment.push(`${x},${y}`);
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", String(x));
      dot.setAttribute("cy", String(y));
      dot.setAttribute("r", "2.5");
      dot.setAttribute("fill", colour);
      dot.dataset.tick = String(tick);
      dot.dataset.value = String(value);
      group.appendChild(dot);
    });
    flush();
    svg.appendChild(group);
  });
  return svg;
}
