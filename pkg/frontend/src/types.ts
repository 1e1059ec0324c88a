/** JSON shapes served by the survey service. */

export interface QuestionResponse {
  question_token: string;
  z1: number[];
  z2: number[];
  attribute_labels: string[];
  answered: number;
  n_q: number;
}

export interface ChoiceResponse {
  ok: boolean;
  step: number;
  answered: number;
  done: boolean;
  duplicate: boolean;
}

export interface PiTracePoint {
  step: number;
  pi: number[];
}

export interface StateResponse {
  session_id: string;
  mode: string;
  status: string;
  k: number;
  attribute_labels: string[];
  n_q: number;
  respondent_count: number;
  respondents_done: number;
  question_count: number;
  human_answers: number;
  pi: number[] | null;
  certainty: number[] | null;
  extracted_product: number[] | null;
  pi_trace: PiTracePoint[] | null;
}

export interface CreateSessionResponse {
  session_id: string;
  token: string;
}

export type Choice = "z1" | "z2";
