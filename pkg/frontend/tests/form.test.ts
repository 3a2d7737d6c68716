import { describe, expect, it } from "vitest";

import {
  buildFeedbackPayload,
  COMPONENTS,
  emptyForm,
  isComplete,
  RATING_STEPS,
  setComponent,
} from "../src/form.js";

describe("feedback form gating", () => {
  it("fresh form is incomplete", () => {
    expect(isComplete(emptyForm())).toBe(false);
  });

  it("three of four components is still incomplete", () => {
    let form = emptyForm();
    form = setComponent(form, "relevance", 1.0);
    form = setComponent(form, "accuracy", 0.5);
    form = setComponent(form, "compliance", 0.75);
    expect(isComplete(form)).toBe(false);
    expect(() => buildFeedbackPayload("case-1", form)).toThrow(/incomplete/);
  });

  it("all four set enables submission", () => {
    let form = emptyForm();
    for (const component of COMPONENTS) form = setComponent(form, component, 0.75);
    expect(isComplete(form)).toBe(true);
    const payload = buildFeedbackPayload("case-1", form);
    expect(payload.case_id).toBe("case-1");
    expect(payload.satisfaction).toBe(0.75);
  });

  it("unsetting a component disables submission again", () => {
    let form = emptyForm();
    for (const component of COMPONENTS) form = setComponent(form, component, 1.0);
    form = setComponent(form, "compliance", null);
    expect(isComplete(form)).toBe(false);
  });

  it("ratings move in quarter steps only", () => {
    const form = emptyForm();
    for (const step of RATING_STEPS) {
      expect(setComponent(form, "relevance", step).relevance).toBe(step);
    }
    expect(() => setComponent(form, "relevance", 0.3)).toThrow(/0.25 steps/);
  });

  it("optional fields only appear when set", () => {
    let form = emptyForm();
    for (const component of COMPONENTS) form = setComponent(form, component, 0.5);
    const bare = buildFeedbackPayload("case-1", form);
    expect("qualitative_label" in bare).toBe(false);
    expect("comment" in bare).toBe(false);

    const withExtras = buildFeedbackPayload("case-1", {
      ...form,
      qualitativeLabel: "low accuracy",
      comment: "misses the holding",
    });
    expect(withExtras.qualitative_label).toBe("low accuracy");
    expect(withExtras.comment).toBe("misses the holding");
  });
});
