// Canvas + HUD painting. Immediate-mode redraw per received frame; the
// service stays authoritative and nothing is predicted client-side.

import { formatMetric, HUD_METRICS, ViewModel } from "./view.js";

const COLORS = {
  background: "#11161d",
  gridline: "#27303c",
  object: "#e0a33c",
  objectDead: "#59502f",
  bin: "#5286c5",
  gripper: "#e8e8e8",
  goalRing: "#53d769",
  amplified: "#53d769",
  userAction: "#cfd8e3",
  error: "#e06c5c",
};

export class CanvasRenderer {
  private flashUntil = 0;

  constructor(private readonly canvas: HTMLCanvasElement) {}

  draw(view: ViewModel): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const size = Math.min(this.canvas.width, this.canvas.height);
    const cell = size / view.gridSize;
    ctx.fillStyle = COLORS.background;
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.strokeStyle = COLORS.gridline;
    ctx.lineWidth = 1;
    for (let i = 0; i <= view.gridSize; i++) {
      ctx.beginPath();
      ctx.moveTo(i * cell, 0);
      ctx.lineTo(i * cell, size);
      ctx.stroke();
      ctx.beginPath();
      ctx.moveTo(0, i * cell);
      ctx.lineTo(size, i * cell);
      ctx.stroke();
    }
    // rows grow away from the operator: draw row 0 at the bottom
    const cx = (col: number) => (col + 0.5) * cell;
    const cy = (row: number) => size - (row + 0.5) * cell;
    for (const g of view.glyphs) {
      const x = cx(g.col);
      const y = cy(g.row);
      if (g.kind === "object") {
        ctx.fillStyle = g.alive ? COLORS.object : COLORS.objectDead;
        ctx.beginPath();
        ctx.arc(x, y, cell * 0.32, 0, Math.PI * 2);
        ctx.fill();
      } else if (g.kind === "bin") {
        ctx.strokeStyle = COLORS.bin;
        ctx.lineWidth = 2.5;
        ctx.strokeRect(x - cell * 0.35, y - cell * 0.35, cell * 0.7, cell * 0.7);
      } else if (g.kind === "goal-ring") {
        ctx.strokeStyle = COLORS.goalRing;
        ctx.lineWidth = 2.5;
        ctx.beginPath();
        ctx.arc(x, y, cell * 0.46, 0, Math.PI * 2);
        ctx.stroke();
      } else if (g.kind === "gripper") {
        ctx.strokeStyle = COLORS.gripper;
        ctx.lineWidth = 2.5;
        const r = cell * 0.38;
        if (g.closed) {
          ctx.strokeRect(x - r * 0.7, y - r * 0.7, r * 1.4, r * 1.4);
          if (g.holding) {
            ctx.fillStyle = COLORS.object;
            ctx.beginPath();
            ctx.arc(x, y, cell * 0.2, 0, Math.PI * 2);
            ctx.fill();
          }
        } else {
          ctx.beginPath();
          ctx.moveTo(x - r, y - r);
          ctx.lineTo(x - r, y + r * 0.6);
          ctx.moveTo(x + r, y - r);
          ctx.lineTo(x + r, y + r * 0.6);
          ctx.stroke();
        }
      }
    }
    if (view.amplified) this.flashUntil = performance.now() + 350;
    if (performance.now() < this.flashUntil) {
      ctx.strokeStyle = COLORS.amplified;
      ctx.lineWidth = 5;
      ctx.strokeRect(2, 2, size - 4, size - 4);
    }
  }
}

export class HudRenderer {
  constructor(
    private readonly beliefPanel: HTMLElement,
    private readonly statusLine: HTMLElement,
    private readonly actionLine: HTMLElement,
    private readonly metricsTable: HTMLElement,
    private readonly banner: HTMLElement,
  ) {}

  draw(view: ViewModel): void {
    this.statusLine.textContent = `tick ${view.tick} | ${view.phase}`;
    if (view.action) {
      this.actionLine.textContent = view.amplified
        ? `>> ${view.action} (amplified)`
        : view.action;
      this.actionLine.className = view.amplified ? "action amplified"
        : view.error ? "action error" : "action";
    } else {
      this.actionLine.textContent = "-";
      this.actionLine.className = "action";
    }
    this.drawBelief(view);
    this.drawMetrics(view);
    if (view.terminal) {
      this.banner.textContent = view.terminal === "success"
        ? "SUCCESS - task complete" : "FAILURE - episode over";
      this.banner.className = `banner ${view.terminal}`;
      this.banner.style.display = "block";
    } else {
      this.banner.style.display = "none";
    }
  }

  private drawBelief(view: ViewModel): void {
    this.beliefPanel.innerHTML = "";
    if (view.beliefBars === null) {
      this.beliefPanel.style.display = "none";
      return;
    }
    this.beliefPanel.style.display = "block";
    for (const bar of view.beliefBars) {
      const row = document.createElement("div");
      row.className = "belief-row";
      const label = document.createElement("span");
      label.textContent = `${view.phase === "pickup" ? "obj" : "bin"} ${bar.goal}`;
      const track = document.createElement("div");
      track.className = "belief-track";
      const fill = document.createElement("div");
      fill.className = bar.isMap ? "belief-fill map" : "belief-fill";
      fill.style.width = `${(bar.p * 100).toFixed(1)}%`;
      const pct = document.createElement("span");
      pct.textContent = `${(bar.p * 100).toFixed(0)}%`;
      track.appendChild(fill);
      row.append(label, track, pct);
      this.beliefPanel.appendChild(row);
    }
  }

  private drawMetrics(view: ViewModel): void {
    this.metricsTable.innerHTML = "";
    for (const [key, label] of HUD_METRICS) {
      if (!(key in view.metrics)) continue;
      const tr = document.createElement("tr");
      const k = document.createElement("td");
      k.textContent = label;
      const v = document.createElement("td");
      v.textContent = formatMetric(view.metrics[key]);
      tr.append(k, v);
      this.metricsTable.appendChild(tr);
    }
  }
}
