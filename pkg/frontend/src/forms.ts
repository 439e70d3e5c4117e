/**
 * Generic feedback-form rendering from the server's form schema:
 * likert scales, radio groups, sliders, and free text. Values are
 * collected as-is; the server is the validation authority, the client
 * only mirrors obvious bounds for friendlier UX.
 */

import type { InputKindPayload, QuestionPayload } from "./protocol.js";

export function buildForm(
  root: HTMLElement,
  questions: QuestionPayload[],
  onSubmit: (answers: Record<string, unknown>) => void,
): void {
  root.innerHTML = "";
  const readers: Array<() => [string, unknown]> = [];
  for (const question of questions) {
    const block = document.createElement("div");
    block.className = "question";
    const prompt = document.createElement("p");
    prompt.textContent = question.prompt;
    block.appendChild(prompt);
    readers.push(appendInput(block, question.id, question.input));
    root.appendChild(block);
  }
  const submit = document.createElement("button");
  submit.textContent = "Submit";
  submit.onclick = () => {
    const answers: Record<string, unknown> = {};
    for (const read of readers) {
      const [id, value] = read();
      answers[id] = value;
    }
    onSubmit(answers);
  };
  root.appendChild(submit);
}

function appendInput(
  block: HTMLElement,
  id: string,
  spec: InputKindPayload,
): () => [string, unknown] {
  if (spec.kind === "likert") {
    const group = document.createElement("div");
    group.className = "likert";
    for (let v = spec.min; v <= spec.max; v++) {
      const label = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = id;
      radio.value = String(v);
      label.appendChild(radio);
      const caption = spec.labels?.[v - spec.min];
      label.append(caption ? `${v} (${caption})` : String(v));
      group.appendChild(label);
    }
    block.appendChild(group);
    return () => {
      const checked = block.querySelector<HTMLInputElement>(`input[name="${id}"]:checked`);
      return [id, checked ? Number(checked.value) : null];
    };
  }
  if (spec.kind === "radio") {
    for (const option of spec.options) {
      const label = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = id;
      radio.value = option;
      label.appendChild(radio);
      label.append(option);
      block.appendChild(label);
    }
    return () => {
      const checked = block.querySelector<HTMLInputElement>(`input[name="${id}"]:checked`);
      return [id, checked ? checked.value : null];
    };
  }
  if (spec.kind === "slider") {
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = String(spec.min);
    slider.max = String(spec.max);
    slider.step = String(spec.step);
    const value = document.createElement("span");
    value.textContent = slider.value;
    slider.oninput = () => (value.textContent = slider.value);
    block.appendChild(slider);
    block.appendChild(value);
    return () => [id, Number(slider.value)];
  }
  const area = document.createElement("textarea");
  area.rows = 3;
  block.appendChild(area);
  return () => [id, area.value];
}
