/** Forward-only session state machine: serve, decide, next, questionnaire.
 *
 * There is deliberately no backward transition and no storage of past
 * items; once a decision is acknowledged the item is gone from the client.
 * A decision interrupted by a network failure is kept as the pending
 * decision and retried verbatim, and a duplicate-decision conflict from the
 * service counts as acknowledged (the store is idempotent per item).
 */

import { NetworkError, ServiceError, StudyApi } from "./api.js";
import type { Arm, ItemView } from "./types.js";

export type Phase = "start" | "item" | "questionnaire" | "done";

export interface PendingDecision {
  incidentId: string;
  factorId: string;
  decision: boolean;
}

export class FlowError extends Error {}

export class SessionFlow {
  private phase_: Phase = "start";
  private sessionId: string | null = null;
  private arm_: Arm | null = null;
  private item: ItemView | null = null;
  private pending: PendingDecision | null = null;
  private busy = false;

  constructor(private readonly api: StudyApi) {}

  get phase(): Phase {
    return this.phase_;
  }

  get arm(): Arm | null {
    return this.arm_;
  }

  /** The one item the annotator may act on; null outside the item phase. */
  get currentItem(): ItemView | null {
    return this.item;
  }

  get pendingDecision(): PendingDecision | null {
    return this.pending;
  }

  private async exclusive<T>(op: () => Promise<T>): Promise<T> {
    if (this.busy) {
      throw new FlowError("another request is in flight");
    }
    this.busy = true;
    try {
      return await op();
    } finally {
      this.busy = false;
    }
  }

  async open(studyId: string, annotatorId: string, arm: Arm): Promise<void> {
    if (this.phase_ !== "start") {
      throw new FlowError(`cannot open a session from phase ${this.phase_}`);
    }
    await this.exclusive(async () => {
      const session = await this.api.openSession(studyId, annotatorId, arm);
      this.sessionId = session.session_id;
      this.arm_ = session.arm;
      await this.fetchNext();
    });
  }

  private async fetchNext(): Promise<void> {
    const next = await this.api.nextItem(this.requireSession());
    if (next.done) {
      this.item = null;
      this.phase_ = "questionnaire";
    } else {
      this.item = next;
      this.phase_ = "item";
    }
  }

  /** Submit the decision for the current item, then advance. */
  async decide(decision: boolean): Promise<void> {
    if (this.phase_ !== "item" || this.item === null) {
      throw new FlowError(`no item to decide in phase ${this.phase_}`);
    }
    this.pending = {
      incidentId: this.item.incident_id,
      factorId: this.item.factor_id,
      decision,
    };
    await this.retryPending();
  }

  /** Re-send the pending decision after a network failure; idempotent. */
  async retryPending(): Promise<void> {
    const pending = this.pending;
    if (pending === null) {
      throw new FlowError("no pending decision to retry");
    }
    await this.exclusive(async () => {
      try {
        await this.api.submitDecision(
          this.requireSession(),
          pending.incidentId,
          pending.factorId,
          pending.decision,
        );
      } catch (err) {
        if (err instanceof NetworkError) {
          throw err; // decision stays pending; caller shows the retry banner
        }
        if (err instanceof ServiceError && err.code === "duplicate_decision") {
          // Already stored by an earlier attempt: advance without resending.
        } else {
          throw err;
        }
      }
      this.pending = null;
      this.item = null;
      await this.fetchNext();
    });
  }

  async submitQuestionnaire(answers: Record<string, number>): Promise<void> {
    if (this.phase_ !== "questionnaire") {
      throw new FlowError(`no questionnaire to submit in phase ${this.phase_}`);
    }
    await this.exclusive(async () => {
      await this.api.submitQuestionnaire(this.requireSession(), answers);
      this.phase_ = "done";
    });
  }

  private requireSession(): string {
    if (this.sessionId === null) {
      throw new FlowError("no open session");
    }
    return this.sessionId;
  }
}
