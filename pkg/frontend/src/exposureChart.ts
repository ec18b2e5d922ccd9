import type { ExposureSamples } from "./types";

const WIDTH = 640;
const HEIGHT = 180;

function polyline(times: number[], values: number[], maxValue: number): string {
  const tMax = times[times.length - 1] || 1;
  const scaleY = maxValue > 0 ? maxValue : 1;
  return times
    .map((t, i) => {
      const x = (t / tMax) * WIDTH;
      const y = HEIGHT - (values[i] / scaleY) * HEIGHT;
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}

export interface ExposureChartModel {
  exposurePoints: string;
  cumulativePoints: string;
  terminalAuc: number;
}

export function buildChartModel(samples: ExposureSamples): ExposureChartModel | null {
  if (samples.times_hours.length === 0) {
    return null;
  }
  const maxExposure = Math.max(...samples.exposure);
  const maxCumulative = Math.max(...samples.cumulative_exposure);
  return {
    exposurePoints: polyline(samples.times_hours, samples.exposure, maxExposure),
    cumulativePoints: polyline(samples.times_hours, samples.cumulative_exposure, maxCumulative),
    terminalAuc: samples.cumulative_exposure[samples.cumulative_exposure.length - 1],
  };
}

/** Exposure and cumulative-exposure curves over cycle 1 as inline SVG. */
export function renderExposureChart(container: HTMLElement, samples: ExposureSamples): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const model = buildChartModel(samples);
  if (model === null) {
    const empty = doc.createElement("div");
    empty.className = "empty-state";
    empty.textContent = "no exposure samples available";
    container.appendChild(empty);
    return;
  }
  const ns = "http://www.w3.org/2000/svg";
  const svg = doc.createElementNS(ns, "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("class", "exposure-chart");
  const curve = doc.createElementNS(ns, "polyline");
  curve.setAttribute("points", model.exposurePoints);
  curve.setAttribute("class", "curve-exposure");
  curve.setAttribute("fill", "none");
  const auc = doc.createElementNS(ns, "polyline");
  auc.setAttribute("points", model.cumulativePoints);
  auc.setAttribute("class", "curve-cumulative");
  auc.setAttribute("fill", "none");
  svg.appendChild(curve);
  svg.appendChild(auc);
  container.appendChild(svg);
  const label = doc.createElement("div");
  label.className = "terminal-auc";
  label.textContent = `cycle-1 cumulative exposure: ${model.terminalAuc.toFixed(2)}`;
  container.appendChild(label);
}
