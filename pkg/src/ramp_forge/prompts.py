"""Prompt templates for the agent roles and the answer judge.

Templates are plain strings with {name} placeholders filled by literal
replacement (not str.format: the few-shot JSON examples inside them contain
braces). The judge prompt is part of the product contract; its wording,
examples, and the closing only-return-A-or-B instruction are load-bearing
for judge behavior and must not be reflowed casually.
"""

from __future__ import annotations

PLANNER_PLACEHOLDERS = ("question",)
REWRITER_PLACEHOLDERS = ("question", "query")
OBSERVER_PLACEHOLDERS = ("question", "history")
JUDGE_PLACEHOLDERS = ("question", "target", "prediction")


class PromptError(ValueError):
    pass


def render_template(template: str, **fields: str) -> str:
    """Fill {name} placeholders by replacement, checking they all exist."""
    out = template
    for name, value in fields.items():
        marker = "{" + name + "}"
        if marker not in template:
            raise PromptError(f"template is missing placeholder {marker}")
        out = out.replace(marker, value)
    return out


PLANNER_PROMPT = """You are the planner of a search team working on a fill-in-the-blanks task. \
Read the task, note which spans are masked and what kind of fact each one must be, \
and propose the first search query.

Respond with a single JSON object and nothing else, in the form
{"thought": "<your breakdown of the masked spans and your plan>", "query": "<the first search query>"}

Example:
Task: The capital of [mask] is Paris, a city on the [mask] river.
Fill in all the [mask] and output the whole paragraph without changing its format.
Response: {"thought": "Two spans are masked: the country whose capital is Paris, and the river Paris lies on. I will find the country first, then the river.", "query": "country whose capital is Paris"}

Task: {question}
Response:"""


REWRITER_PROMPT = """You are the query rewriter of a search team. Rewrite the candidate query so a \
keyword search engine retrieves the right documents: keep distinctive names, \
numbers, and rare words; drop filler.

Respond with a single JSON object and nothing else, in the form
{"thought": "<why this phrasing retrieves better>", "query": "<the rewritten query>"}

Example:
Candidate query: I would like to know which country has Paris as its capital city
Response: {"thought": "Keyword engines reward terse, distinctive terms.", "query": "Paris capital country"}

Task: {question}
Candidate query: {query}
Response:"""


OBSERVER_PROMPT = """You are the observer of a search team working on a fill-in-the-blanks task. \
Review the steps so far, weigh the search results against the masked spans, and \
decide: answer now, or search again.

Respond with a single JSON object and nothing else. Either
{"thought": "<what the results established>", "query": "<the next search query>"}
to keep searching, or
{"thought": "<what the results established>", "answer": "<the final answer>"}
to finish. The answer must follow the output format the task asks for; for a \
fill-in-the-blanks task that means the whole paragraph with every [mask] replaced.

Task: {question}

Steps so far:
{history}

Response:"""


JUDGE_PROMPT = """Please evaluate whether the model's response is correct based on the given question, standard answer, and the model's predicted answer. Your task is to rate the result as: Correct or Incorrect.

Here are examples of Correct responses:
Question: What are Barack Obama's children's names?
Standard Answer: Malia Obama and Sasha Obama
Model Prediction 1: Malia Obama and Sasha Obama
Model Prediction 2: Malia and Sasha
Model Prediction 3: Most people would say Malia and Sasha, but I'm not sure and need to confirm.
Model Prediction 4: Barack Obama has two daughters, Malia Ann and Natasha Marian, but they are commonly known as Malia Obama and Sasha Obama.
These responses are Correct because:
They fully include the important information from the standard answer.
They do not contain any information that contradicts the standard answer.
Only the semantic content is considered; language (English or Chinese), case, punctuation, grammar, and order are not important.
The presence of vague statements or guesses is acceptable, as long as the standard answer is included and there is no incorrect or contradictory information.

Here are examples of Incorrect responses:
Question: What are Barack Obama's children's names?
Standard Answer: Malia Obama and Sasha Obama
Model Prediction 1: Malia
Model Prediction 2: Malia, Sasha, Susan, and Sasha Obama or Malia Obama, or Natasha Marian, or Einstein
Model Prediction 3: Although I don't know their exact names, I can say that Barack Obama has two children.
Model Prediction 4: You might be thinking of Bessie and Olivia. But you should check the latest references for detailed information. Is that the correct answer?
Model Prediction 5: Barack Obama's children
These responses are Incorrect because:
They contain factual statements that contradict the standard answer.
The answer is empty, restates the question.
The answer lists multiple answers, restates the answer.

Please note the following:
The standard answer may contain multiple aspects of the question's response, and within the same aspect, there may be multiple different descriptions, all of which are correct and are given within the same parentheses, connected by commas. For example, consider the question "What is the name of the social media platforms purchased by Elon Musk?":
Predicted answers "Twitter," "Twitter, X," and "X" are all Correct.
For standard answers that contain responses to multiple aspects of the question, the model must provide answers to all aspects to be considered correct; otherwise, it is directly judged as Incorrect. There is no such output as Partially Correct. These answers will be given in different parentheses. For example, consider the question "Who are the original members of the band The Beatles?":
Predicted answers "John Lennon, Paul McCartney, George Harrison, Ringo Starr" that include all answers are considered Correct.
Predicted answers like "John Lennon, Paul McCartney" that do not include all answers are considered Incorrect.

Also, pay special attention to the following:
For questions with numerical standard answers, the predicted answer should match the standard answer. For example, consider the question "What is the total length of the Jinshan Railway Huangpujiang Special Bridge in meters?":
Predicted answers "3518," "3518.1," and "3518.17" are all Correct.
Predicted answers "3520" and "3600" are all Incorrect.
If the model's prediction does not directly answer the question and attempts to bypass or fails to directly provide the standard answer, it is considered an Incorrect answer.
If the standard answer contains more information than the question, the predicted answer only needs to include the information mentioned in the question.
If it is obvious from the question that the predicted answer has omitted information, it is considered Correct.
If it is clear that different translation versions of a name refer to the same person, they are also considered Correct.
You should focus more on the match between the standard answer and the model's prediction, rather than whether the standard answer is correct.

Here is a new example question. Please rate the predicted answer as one of the following:
A: Correct
B: Incorrect

Question: {question}
Standard Answer: {target}
Predicted Answer: {prediction}

Only return the option represented by Correct or Incorrect, that is, only return A or B, without adding any other text."""


def render_judge_prompt(
    question: str, target: str, prediction: str, template: str = JUDGE_PROMPT
) -> str:
    return render_template(
        template, question=question, target=target, prediction=prediction
    )
