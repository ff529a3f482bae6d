/**
 * Stick-figure pose view. Link positions come straight from /api/fk;
 * each segment connects a link to its parent using the kinematic tree
 * reported by /api/model. Two orthographic projections are drawn: front
 * (lateral vs height) and side (forward vs height).
 */

import { FkPayload, LinkInfo } from "./api.js";
import { EditorSession } from "./session.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 340;
const HEIGHT = 300;
const HALF = WIDTH / 2;

export class SkeletonPanel {
  readonly svg: SVGSVGElement;
  /** The exact payload reference last rendered. */
  lastDrawn: FkPayload | null = null;

  private readonly session: EditorSession;

  constructor(session: EditorSession, mount: HTMLElement) {
    this.session = session;
    this.svg = document.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
    this.svg.setAttribute("class", "skeleton");
    mount.appendChild(this.svg);
  }

  render(): void {
    const fk = this.session.skeleton;
    const links = this.session.model?.links ?? [];
    this.svg.replaceChildren();
    this.lastDrawn = fk;
    if (fk === null || links.length === 0) return;

    const zs = Object.values(fk.positions).map((p) => p[2]);
    const zLo = Math.min(...zs);
    const zHi = Math.max(...zs);
    const span = Math.max(zHi - zLo, 0.3);
    const scale = (HEIGHT - 40) / (span * 1.2);
    const zMid = (zLo + zHi) / 2;

    const project = (p: [number, number, number], pane: "front" | "side") => {
      const horizontal = pane === "front" ? -p[1] : p[0];
      const x = (pane === "front" ? HALF / 2 : HALF + HALF / 2) + horizontal * scale;
      const y = HEIGHT / 2 - (p[2] - zMid) * scale;
      return { x, y };
    };

    for (const pane of ["front", "side"] as const) {
      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("x", String(pane === "front" ? HALF / 2 : HALF + HALF / 2));
      label.setAttribute("y", "14");
      label.setAttribute("class", "pane-label");
      label.textContent = pane;
      this.svg.appendChild(label);
      this.drawPane(fk, links, (p) => project(p, pane));
    }

    const divider = document.createElementNS(SVG_NS, "line");
    divider.setAttribute("x1", String(HALF));
    divider.setAttribute("x2", String(HALF));
    divider.setAttribute("y1", "0");
    divider.setAttribute("y2", String(HEIGHT));
    divider.setAttribute("class", "pane-divider");
    this.svg.appendChild(divider);
  }

  private drawPane(
    fk: FkPayload,
    links: LinkInfo[],
    project: (p: [number, number, number]) => { x: number; y: number },
  ): void {
    for (const link of links) {
      if (link.parent === null) continue;
      const a = fk.positions[link.parent];
      const b = fk.positions[link.name];
      if (a === undefined || b === undefined) continue;
      const pa = project(a);
      const pb = project(b);
      const seg = document.createElementNS(SVG_NS, "line");
      seg.setAttribute("x1", String(pa.x));
      seg.setAttribute("y1", String(pa.y));
      seg.setAttribute("x2", String(pb.x));
      seg.setAttribute("y2", String(pb.y));
      seg.setAttribute("class", "bone");
      seg.setAttribute("data-link", link.name);
      this.svg.appendChild(seg);
    }
    for (const [name, pos] of Object.entries(fk.positions)) {
      const { x, y } = project(pos);
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", String(x));
      dot.setAttribute("cy", String(y));
      dot.setAttribute("r", "2.5");
      dot.setAttribute("class", "joint-dot");
      dot.setAttribute("data-link", name);
      this.svg.appendChild(dot);
    }
  }
}
