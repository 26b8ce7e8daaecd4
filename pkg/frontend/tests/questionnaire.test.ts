import { describe, expect, it } from "vitest";

import { QuestionnaireForm } from "../src/questionnaire.js";
import { QUESTIONS } from "./fakeServer.js";

describe("QuestionnaireForm", () => {
  it("blocks collection until all twelve answers are present", () => {
    const form = new QuestionnaireForm(QUESTIONS);
    for (let i = 1; i <= 11; i += 1) {
      expect(form.setAnswer(`Q${i}`, i <= 6 ? 3 : i <= 9 ? 2 : 4)).toBe(true);
      expect(form.isComplete()).toBe(false);
    }
    expect(form.setAnswer("Q12", 5)).toBe(true);
    expect(form.isComplete()).toBe(true);
    expect(Object.keys(form.collect()).length).toBe(12);
  });

  it("rejects out-of-range values before any POST", () => {
    const form = new QuestionnaireForm(QUESTIONS);
    expect(form.setAnswer("Q1", 0)).toBe(false);
    expect(form.setAnswer("Q1", 6)).toBe(false);
    expect(form.setAnswer("Q7", 3)).toBe(false); // yes/no question
    expect(form.setAnswer("Q7", 2.5)).toBe(false);
    expect(form.setAnswer("Q99", 1)).toBe(false);
    expect(form.getAnswer("Q1")).toBeUndefined();
  });

  it("throws when collecting an incomplete form", () => {
    const form = new QuestionnaireForm(QUESTIONS);
    form.setAnswer("Q1", 1);
    expect(() => form.collect()).toThrow();
  });

  it("renders one fieldset per question and enables submit via onChange", () => {
    const form = new QuestionnaireForm(QUESTIONS);
    let changes = 0;
    const root = form.render(document, () => {
      changes += 1;
    });
    expect(root.querySelectorAll("fieldset").length).toBe(12);
    const q7 = root.querySelector('fieldset[data-question="Q7"]')!;
    expect(q7.querySelectorAll('input[type="radio"]').length).toBe(2);
    const radio = q7.querySelector("input")! as HTMLInputElement;
    radio.dispatchEvent(new Event("change"));
    expect(changes).toBe(1);
    expect(form.getAnswer("Q7")).toBe(1);
  });
});
