/** Questionnaire form: rendering, answer tracking, and range enforcement.
 *
 * Question wording and scale anchors come from the service fixture via
 * GET /api/questionnaire, so the form can never drift from what the service
 * validates.
 */

import type { Question } from "./types.js";

export class QuestionnaireForm {
  private readonly answers = new Map<string, number>();

  constructor(readonly questions: Question[]) {}

  /** Record an answer; rejects values outside the question's scale. */
  setAnswer(questionId: string, value: number): boolean {
    const question = this.questions.find((q) => q.id === questionId);
    if (question === undefined) {
      return false;
    }
    if (!Number.isInteger(value) || value < 1 || value > question.scale.length) {
      return false;
    }
    this.answers.set(questionId, value);
    return true;
  }

  getAnswer(questionId: string): number | undefined {
    return this.answers.get(questionId);
  }

  /** Submission unlocks only when every question has an in-range answer. */
  isComplete(): boolean {
    return this.questions.every((q) => this.answers.has(q.id));
  }

  collect(): Record<string, number> {
    if (!this.isComplete()) {
      throw new Error("questionnaire is incomplete");
    }
    return Object.fromEntries(this.answers);
  }

  /** Build the form DOM; ``onChange`` fires after every answer change. */
  render(doc: Document, onChange: () => void): HTMLElement {
    const root = doc.createElement("div");
    root.className = "questionnaire";
    for (const question of this.questions) {
      const block = doc.createElement("fieldset");
      block.dataset.question = question.id;
      const legend = doc.createElement("legend");
      legend.textContent = `${question.id}: ${question.text}`;
      block.appendChild(legend);
      question.scale.forEach((anchor, i) => {
        const value = i + 1;
        const label = doc.createElement("label");
        const input = doc.createElement("input");
        input.type = "radio";
        input.name = question.id;
        input.value = String(value);
        input.addEventListener("change", () => {
          this.setAnswer(question.id, value);
          onChange();
        });
        label.appendChild(input);
        label.appendChild(doc.createTextNode(` ${value} - ${anchor}`));
        block.appendChild(label);
      });
      root.appendChild(block);
    }
    return root;
  }
}
