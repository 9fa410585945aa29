/** Tiny SVG sparkline paths from rate samples. Pure functions. */

export const SPARK_CAP = 60;

/** Append to a bounded sample window, evicting the oldest. */
export function pushSample(window: number[], value: number, cap = SPARK_CAP): number[] {
  const out = window.length >= cap ? window.slice(window.length - cap + 1) : window.slice();
  out.push(value);
  return out;
}

/**
 * SVG path for the samples, scaled to width x height with y inverted
 * (SVG grows downward). A flat series draws a mid-height line; fewer than
 * two samples draw nothing.
 */
export function sparklinePath(values: number[], width: number, height: number): string {
  if (values.length < 2) return "";
  const min = Math.min(...values);
  const max = Math.max(...values);
  const span = max - min;
  const stepX = width / (values.length - 1);
  const points = values.map((v, i) => {
    const x = i * stepX;
    const y = span === 0 ? height / 2 : height - ((v - min) / span) * height;
    return `${x.toFixed(1)},${y.toFixed(1)}`;
  });
  return `M${points[0]} L${points.slice(1).join(" ")}`;
}
