/** Append-only record of user interactions, exportable at any time. */

export type AuditAction = "search" | "expand" | "annotate" | "import" | "export";

export interface AuditEntry {
  timestamp: string;
  action: AuditAction;
  parameters: Record<string, unknown>;
}

export class AuditLog {
  private readonly entries: AuditEntry[] = [];
  private readonly clock: () => string;

  constructor(clock?: () => string) {
    this.clock = clock ?? (() => new Date().toISOString());
  }

  get length(): number {
    return this.entries.length;
  }

  /** Records one completed action. Entries are frozen on append. */
  append(action: AuditAction, parameters: Record<string, unknown>): AuditEntry {
    const entry = Object.freeze({
      timestamp: this.clock(),
      action,
      parameters: Object.freeze({ ...parameters }),
    });
    this.entries.push(entry);
    return entry;
  }

  /** Snapshot copy; mutating it cannot touch the log. */
  list(): AuditEntry[] {
    return this.entries.slice();
  }
}
