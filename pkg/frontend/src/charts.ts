export const METRIC_COLUMNS = [
  "t_ms",
  "cpu_pct",
  "loadavg_5s",
  "mem_used",
  "mem_free",
  "disk_read_bps",
  "disk_write_bps",
  "net_rx_bps",
  "net_tx_bps",
] as const;

export type MetricColumn = (typeof METRIC_COLUMNS)[number];

export type MetricRow = Record<MetricColumn, number>;

// one SSE data line is one monitor CSV row in METRIC_COLUMNS order
export function parseMetricRow(line: string): MetricRow | null {
  const parts = line.trim().split(",");
  if (parts.length !== METRIC_COLUMNS.length) {
    return null;
  }
  const values = parts.map(Number);
  if (values.some((value) => Number.isNaN(value))) {
    return null;
  }
  const row = {} as MetricRow;
  METRIC_COLUMNS.forEach((column, i) => {
    row[column] = values[i];
  });
  return row;
}

export interface ChartBuffer {
  machine: string;
  rows: MetricRow[];
  // sample times after which the stream dropped; rendered as gap markers
  gaps: number[];
}

export function newBuffer(machine: string): ChartBuffer {
  return { machine, rows: [], gaps: [] };
}

export function appendRow(buffer: ChartBuffer, line: string): ChartBuffer {
  const row = parseMetricRow(line);
  if (row === null) {
    return buffer;
  }
  return { ...buffer, rows: [...buffer.rows, row] };
}

export function markGap(buffer: ChartBuffer): ChartBuffer {
  if (buffer.rows.length === 0) {
    return buffer;
  }
  const at = buffer.rows[buffer.rows.length - 1].t_ms;
  if (buffer.gaps.includes(at)) {
    return buffer;
  }
  return { ...buffer, gaps: [...buffer.gaps, at] };
}

export interface ChartPoint {
  t: number;
  value: number;
}

export function seriesFor(buffer: ChartBuffer, column: MetricColumn): ChartPoint[] {
  return buffer.rows.map((row) => ({ t: row.t_ms, value: row[column] }));
}

// scales a series into an SVG polyline points string; the y axis starts at
// zero so rate charts do not exaggerate noise, and coordinates round to 2
// decimals to keep rendered output stable
export function polylinePoints(points: ChartPoint[], width: number, height: number): string {
  if (points.length === 0) {
    return "";
  }
  const t0 = points[0].t;
  const t1 = points[points.length - 1].t;
  const span = Math.max(1, t1 - t0);
  const peak = Math.max(1e-9, ...points.map((p) => p.value));
  return points
    .map((p) => {
      const x = points.length === 1 ? width / 2 : ((p.t - t0) / span) * width;
      const y = height - (p.value / peak) * height;
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}

// x positions of gap markers in the same coordinate system as the polyline
export function gapPositions(buffer: ChartBuffer, width: number): number[] {
  if (buffer.rows.length < 2) {
    return [];
  }
  const t0 = buffer.rows[0].t_ms;
  const t1 = buffer.rows[buffer.rows.length - 1].t_ms;
  const span = Math.max(1, t1 - t0);
  return buffer.gaps
    .filter((t) => t >= t0 && t <= t1)
    .map((t) => ((t - t0) / span) * width);
}
