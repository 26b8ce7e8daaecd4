/** Application bootstrap: wires the flow machine to the live DOM. */

import { NetworkError, ServiceError, StudyApi } from "./api.js";
import { SessionFlow } from "./flow.js";
import { QuestionnaireForm } from "./questionnaire.js";
import type { Arm } from "./types.js";
import { renderBanner, renderItemScreen } from "./views.js";

const api = new StudyApi();
const flow = new SessionFlow(api);

function container(): HTMLElement {
  const el = document.getElementById("app");
  if (el === null) {
    throw new Error("missing #app container");
  }
  return el;
}

function showStartScreen(): void {
  const root = container();
  root.textContent = "";
  const form = document.createElement("form");
  form.className = "start-screen";
  form.innerHTML = `
    <h1>Annotation session</h1>
    <label>Study id <input name="study" required></label>
    <label>Annotator id <input name="annotator" required></label>
    <label>Arm
      <select name="arm">
        <option value="control">control</option>
        <option value="intervention">intervention</option>
      </select>
    </label>
    <button type="submit">Begin</button>
  `;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(form);
    void beginSession(
      String(data.get("study")),
      String(data.get("annotator")),
      String(data.get("arm")) as Arm,
    );
  });
  root.appendChild(form);
}

async function beginSession(studyId: string, annotatorId: string, arm: Arm): Promise<void> {
  try {
    await flow.open(studyId, annotatorId, arm);
  } catch (err) {
    handleError(err, () => beginSession(studyId, annotatorId, arm));
    return;
  }
  showCurrentPhase();
}

function showCurrentPhase(): void {
  switch (flow.phase) {
    case "item":
      showItem();
      break;
    case "questionnaire":
      void showQuestionnaire();
      break;
    case "done":
      showDone();
      break;
    case "start":
      showStartScreen();
      break;
  }
}

function showItem(): void {
  const item = flow.currentItem;
  if (item === null) {
    showCurrentPhase();
    return;
  }
  const handles = renderItemScreen(document, container(), item);
  const decide = (decision: boolean) => {
    handles.trueButton.disabled = true;
    handles.falseButton.disabled = true;
    flow
      .decide(decision)
      .then(showCurrentPhase)
      .catch((err) => handleError(err, retryPending));
  };
  handles.trueButton.addEventListener("click", () => decide(true));
  handles.falseButton.addEventListener("click", () => decide(false));
}

function retryPending(): void {
  flow
    .retryPending()
    .then(showCurrentPhase)
    .catch((err) => handleError(err, retryPending));
}

async function showQuestionnaire(): Promise<void> {
  const questions = await api.questionnaire();
  const form = new QuestionnaireForm(questions);
  const root = container();
  root.textContent = "";
  const heading = document.createElement("h1");
  heading.textContent = `Session feedback (${flow.arm} arm)`;
  root.appendChild(heading);
  const submit = document.createElement("button");
  submit.textContent = "Submit questionnaire";
  submit.disabled = true;
  root.appendChild(form.render(document, () => {
    submit.disabled = !form.isComplete();
  }));
  submit.addEventListener("click", () => {
    submit.disabled = true;
    flow
      .submitQuestionnaire(form.collect())
      .then(showCurrentPhase)
      .catch((err) => {
        submit.disabled = !form.isComplete();
        handleError(err, null);
      });
  });
  root.appendChild(submit);
}

function showDone(): void {
  const root = container();
  root.textContent = "";
  const message = document.createElement("h1");
  message.textContent = "Session complete. Thank you!";
  root.appendChild(message);
}

function handleError(err: unknown, retry: (() => void) | null): void {
  let message: string;
  if (err instanceof NetworkError) {
    message = "Connection problem; your work is safe.";
  } else if (err instanceof ServiceError) {
    message = `${err.code}: ${err.message}`;
    if (err.code === "arm_locked") {
      retry = null;
    }
  } else {
    message = String(err);
  }
  const retryButton = renderBanner(document, container(), message,
                                   retry === null ? null : "Retry");
  if (retryButton !== null && retry !== null) {
    retryButton.addEventListener("click", retry);
  }
}

showStartScreen();
