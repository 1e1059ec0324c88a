"""Request/response models for the survey service API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator


class AttributeSchemaIn(BaseModel):
    attributes: list[str] = Field(..., min_length=1)

    @field_validator("attributes")
    @classmethod
    def unique_nonempty(cls, v: list[str]) -> list[str]:
        if any(not name.strip() for name in v):
            raise ValueError("attribute names must be nonempty")
        if len(set(v)) != len(v):
            raise ValueError("attribute names must be unique")
        return v


class SessionConfigIn(BaseModel):
    mode: Literal["single", "policy"] = "single"
    # default stepsize depends on mode: 1.0 for a bare logit vector, 0.01
    # through the amortized network
    eta: Optional[float] = Field(default=None, gt=0)
    n_q: int = Field(default=10, ge=1)
    seed: int = 0
    skip_identical: bool = True
    phi_init_std: float = Field(default=0.05, ge=0)
    covariate_dim: Optional[int] = Field(default=None, ge=1)
    policy_hidden: tuple[int, ...] = (64, 64)
    require_token: bool = False
    fsync: bool = False


class CreateSessionRequest(BaseModel):
    schema_: AttributeSchemaIn = Field(..., alias="schema")
    config: SessionConfigIn = SessionConfigIn()

    model_config = {"populate_by_name": True}


class CreateSessionResponse(BaseModel):
    session_id: str
    token: str


class AddRespondentRequest(BaseModel):
    covariates: Optional[list[float]] = None


class AddRespondentResponse(BaseModel):
    respondent_id: str


class QuestionResponse(BaseModel):
    question_token: str
    z1: list[int]
    z2: list[int]
    attribute_labels: list[str]
    answered: int
    n_q: int


class ChoiceRequest(BaseModel):
    question_token: str
    choice: Literal["z1", "z2"]


class ChoiceResponse(BaseModel):
    ok: bool
    step: int
    answered: int
    done: bool
    duplicate: bool


class PiTracePoint(BaseModel):
    step: int
    pi: list[float]


class StateResponse(BaseModel):
    session_id: str
    mode: str
    status: str
    k: int
    attribute_labels: list[str]
    n_q: int
    respondent_count: int
    respondents_done: int
    question_count: int
    human_answers: int
    pi: Optional[list[float]] = None
    certainty: Optional[list[float]] = None
    extracted_product: Optional[list[int]] = None
    pi_trace: Optional[list[PiTracePoint]] = None


class StatusRequest(BaseModel):
    status: Literal["active", "suspended", "completed"]


class StatusResponse(BaseModel):
    session_id: str
    status: str
