export interface EventSourceLike {
  onmessage: ((event: { data: string }) => void) | null;
  onerror: ((event: unknown) => void) | null;
  close(): void;
}

export type SourceFactory = (url: string) => EventSourceLike;
export type Scheduler = (fn: () => void, delayMs: number) => void;

export interface MetricStreamOptions {
  factory?: SourceFactory;
  schedule?: Scheduler;
  baseDelayMs?: number;
  maxDelayMs?: number;
}

const DEFAULT_BASE_DELAY_MS = 500;
const DEFAULT_MAX_DELAY_MS = 8000;

function defaultFactory(url: string): EventSourceLike {
  return new EventSource(url) as unknown as EventSourceLike;
}

function defaultSchedule(fn: () => void, delayMs: number): void {
  setTimeout(fn, delayMs);
}

/**
 * One metric subscription with reconnect. Every drop surfaces exactly one
 * gap callback before the next attempt; the retry delay doubles per failed
 * attempt up to the cap and resets once a row arrives.
 */
export class MetricStream {
  private attempt = 0;
  private closed = false;
  private source: EventSourceLike | null = null;

  constructor(
    private readonly url: string,
    private readonly onRow: (row: string) => void,
    private readonly onGap: () => void,
    private readonly options: MetricStreamOptions = {},
  ) {}

  connect(): void {
    if (this.closed) {
      return;
    }
    const factory = this.options.factory ?? defaultFactory;
    const source = factory(this.url);
    this.source = source;
    source.onmessage = (event) => {
      this.attempt = 0;
      this.onRow(event.data);
    };
    source.onerror = () => {
      source.close();
      if (this.closed || this.source !== source) {
        return;
      }
      this.source = null;
      this.onGap();
      const base = this.options.baseDelayMs ?? DEFAULT_BASE_DELAY_MS;
      const cap = this.options.maxDelayMs ?? DEFAULT_MAX_DELAY_MS;
      const delay = Math.min(base * 2 ** this.attempt, cap);
      this.attempt += 1;
      const schedule = this.options.schedule ?? defaultSchedule;
      schedule(() => this.connect(), delay);
    };
  }

  close(): void {
    this.closed = true;
    if (this.source !== null) {
      this.source.close();
      this.source = null;
    }
  }
}
