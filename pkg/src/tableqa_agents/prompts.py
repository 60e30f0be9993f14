"""Prompt construction for the reasoning, debug, judge and formatting agents.

The few-shot blocks are pinned fixtures: a checksum test guards every byte,
so edits here must update the frozen digests deliberately. Query builders
render live tables into the same shapes the few-shot exemplars use.
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

from .core import (
    AnswerCandidate,
    CandidateSet,
    NOTHING,
    Question,
    ReasoningPath,
    ReasoningTrace,
    Table,
    format_number,
    render_cell,
    sanitize_headers,
    table_to_markdown,
)
from .values import DECIMAL, INTEGER, convert_cell, infer_column_types, is_missing

#: Canonical relation name every generated SQL query should target.
SQL_RELATION_NAME = "dataframe"

SQL_TYPE_NAMES = {INTEGER: "INTEGER", DECIMAL: "DECIMAL", "text": "TEXT"}


COT_FEW_SHOT = """\
Read the following table and then write solution texts to answer a question:
| Name     | Number of coins |
|----------|-----------------|
| Braden   | 76              |
| Camilla  | 94              |
| Rick     | 86              |
| Mary     | 84              |
| Hector   | 80              |
| Devin    | 83              |
| Emily    | 82              |
| Avery    | 87              |

Question: Some friends discussed the sizes of their coin collections. What is the mean of the numbers?
## Return a query for the solution and answer with two keys: solution and answer. Respond using JSON only.

{'solution': "To find the mean, we sum up the numbers of coins for all the individuals and then divide the total by the number of individuals.
Step 1: Add all the numbers of coins: 76 + 94 + 86 + 84 + 80 + 83 + 82 + 87 = 672
Step 2: Count the number of individuals: There are 8 individuals.
Step 3: Calculate the mean: Mean = Total sum of coins / Number of individuals = 672/8 = 84", 'answer': 84}

Read the following table and then write solution texts to answer a question:
| Price  | Quantity demanded | Quantity supplied |
|--------|-------------------|-------------------|
| $155   | 22,600            | 5,800             |
| $275   | 20,500            | 9,400             |
| $395   | 18,400            | 13,000            |
| $515   | 16,300            | 16,600            |
| $635   | 14,200            | 20,200            |

Question: Look at the table. Then answer the question. At a price of $155, is there a shortage or a surplus?
## Return a query for the solution and answer with two keys: solution and answer. Respond using JSON only.

{'solution': "To determine if there is a 'shortage' or a 'surplus', we compare the 'quantity demanded' and the 'quantity supplied' at the given price.
Step 1:
Identify the values from the table for $155:
- Quantity demanded = 22,600
- Quantity supplied = 5,800
Step 2:
Calculate the difference:
Shortage or Surplus = Quantity demanded - Quantity supplied = 22,600 - 5,800 = 16,800
Step 3: Determine the situation:
Since the quantity demanded is greater than the quantity supplied, there is a 'shortage' of 16,800 units.", 'answer': 'shortage'}

Read the following table and then write solution texts to answer a question:
| Name     | Number |
|----------|--------|
| Samir    | 7      |
| Kristen  | 4      |
| Dakota   | 7      |
| Jamie    | 8      |
| Maggie   | 9      |

Question: Samir's class recorded how many cans of food each student collected for their canned food drive. What is the median of the numbers?
## Return a query for the solution and answer with two keys: solution and answer. Respond using JSON only.

{'solution': "To find the median, we need to arrange the numbers in order from smallest to largest and then identify the middle number.
Step 1: Arrange the numbers: 4, 7, 7, 8, 9
Step 2: Identify the middle number. Since there are 5 numbers (an odd count), the middle number is the third number. So the median is 7.", 'answer': 7}

Read the following table and then write solution texts to answer a question:
| Toy                     | Price  |
|-------------------------|--------|
| toy boat                | $5.54  |
| toy guitar              | $8.23  |
| set of juggling balls   | $5.01  |
| trivia game             | $8.18  |
| jigsaw puzzle           | $5.30  |
| toy dinosaur            | $3.00  |

Question: Lorenzo has $13.50. Does he have enough to buy a toy guitar and a set of juggling balls?
## Return a query for the solution and answer with two keys: solution and answer. Respond using JSON only.

{'solution': "To determine if Lorenzo can afford both the toy guitar and the set of juggling balls, we need to calculate their combined cost and compare it to Lorenzo's available money.
Step 1: Identify the prices:
- Toy guitar = $8.23
- Set of juggling balls = $5.01
Step 2: Calculate the total cost:
Total cost = 8.23 + 5.01 = 13.24
Step 3: Compare the total cost to Lorenzo's money. Lorenzo has $13.50, and the total cost is $13.24. Since $13.24 is less than $13.50, Lorenzo does have enough money.", 'answer': 'Yes'}
"""


POT_FEW_SHOT = """\
Read the following table and then write Python code with pandas to answer a question:

import pandas as pd
data = {
    'Name': ['Braden', 'Camilla', 'Rick', 'Mary', 'Hector', 'Devin', 'Emily', 'Avery'],
    'Number of coins': [76, 94, 86, 84, 80, 83, 82, 87]
}
df = pd.DataFrame(data)

Question: Some friends discussed the sizes of their coin collections. What is the mean of the numbers?
## You don't need to reprint pre-written code like 'import pandas as pd', 'data = {...}', or 'df = pd.DataFrame(data)'. That code will be provided separately, so just give me the code that processes 'data' and 'df'.
## Return a query for the 'python code with pandas which return ans' with one key: code. Respond using JSON only.

{'code' : '''# Calculate the mean of the 'Number of coins' column
mean_coins = df['Number of coins'].mean()
ans = mean_coins'''}

Read the following table and then write Python code with pandas to answer a question:

import pandas as pd
data = {
    'Price': [155, 275, 395, 515, 635],
    'Quantity demanded': [22600, 20500, 18400, 16300, 14200],
    'Quantity supplied': [5800, 9400, 13000, 16600, 20200]
}
df = pd.DataFrame(data)

Question: Look at the table. Then answer the question. At a price of $155, is there a shortage or a surplus?
## You don't need to reprint pre-written code like 'import pandas as pd', 'data = {...}', or 'df = pd.DataFrame(data)'. That code will be provided separately, so just give me the code that processes 'data' and 'df'.
## Return a query for the 'python code with pandas which return ans' with one key: code. Respond using JSON only.

{'code' : '''# Filter the row where the price is $155
price_155 = df[df['Price'] == 155]
# Calculate shortage or surplus
quantity_demanded = price_155['Quantity demanded'].values[0]
quantity_supplied = price_155['Quantity supplied'].values[0]
if quantity_demanded > quantity_supplied:
    ans = 'shortage'
else:
    ans = 'surplus' '''}

Read the following table and then write Python code with pandas to answer a question:

import pandas as pd
data = {
    'Name': ['Samir', 'Kristen', 'Dakota', 'Jamie', 'Maggie'],
    'Cans collected': [7, 4, 7, 8, 9]
}
df = pd.DataFrame(data)

Question: Samir's class recorded how many cans of food each student collected for their canned food drive. What is the median of the numbers?
## You don't need to reprint pre-written code like 'import pandas as pd', 'data = {...}', or 'df = pd.DataFrame(data)'. That code will be provided separately, so just give me the code that processes 'data' and 'df'.
## Return a query for the 'python code with pandas which return ans' with one key: code. Respond using JSON only.

{'code' : '''# Calculate the median of the 'Cans collected' column
median_cans = df['Cans collected'].median()
ans = median_cans'''}

Read the following table and then write Python code with pandas to answer a question:

import pandas as pd
data = {
    'Toy': ['toy boat', 'toy guitar', 'set of juggling balls', 'trivia game', 'jigsaw puzzle', 'toy dinosaur'],
    'Price': [5.54, 8.23, 5.01, 8.18, 5.30, 3.00]
}
df = pd.DataFrame(data)

Question: Lorenzo has $13.50. Does he have enough to buy a toy guitar and a set of juggling balls?
## You don't need to reprint pre-written code like 'import pandas as pd', 'data = {...}', or 'df = pd.DataFrame(data)'. That code will be provided separately, so just give me the code that processes 'data' and 'df'.
## Return a query for the 'python code with pandas which return ans' with one key: code. Respond using JSON only.

{'code' : '''# Lorenzo's total money
total_money = 13.50

# Filter the prices of 'toy guitar' and 'set of juggling balls'
selected_items = df[df['Toy'].isin(['toy guitar', 'set of juggling balls'])]

# Calculate the total cost
total_cost = selected_items['Price'].sum()

# Determine if Lorenzo has enough money
if total_money >= total_cost:
    ans = "yes"
else:
    ans = "no"
'''}
"""


PDA_FEW_SHOT = """\
You are an expert in reviewing and correcting Python code designed to solve questions about tables.
Review the query, the previous pandas code written to address it, and its execution results to identify any parts that need correction.

### query
Read the following table and then write Python code with pandas to answer a question:

import pandas as pd
data = {
    'Toy': ['toy boat', 'toy guitar', 'set of juggling balls', 'trivia game', 'jigsaw puzzle', 'toy dinosaur'],
    'Price': [5.54, 8.23, 5.01, 8.18, 5.30, 3.00]
}
df = pd.DataFrame(data)

Question: What is the average price of toys that cost more than $5?
## You don't need to reprint pre-written code like 'import pandas as pd', 'data = {...}', or 'df = pd.DataFrame(data)'. That code will be provided separately, so just give me the code that processes 'data' and 'df'.
## Return a query for the python code with pandas which return ans with one key: code. Respond using JSON only. (You must return the value with 'ans')

### Previous Code:
# The following 4 toys are included :
df_previous = df[df['Toy'].isin([
    'toy boat',
    'toy guitar',
    'set of juggling balls',
    'toy dinosaur'
])]
# Summing the prices
total_previous = df_previous['Price'].sum()
# Counting the number of toys
count_previous = len(df_previous)
# Calculating the average
ans = total_previous / count_previous

### Previous Execution Result:
5.445

### Return a query for 'corrected python code with pandas which return ans' with one key: code. Respond using JSON only. (You must return the value with 'ans')
{'code' : '''
# The toys that will actually be included among those priced greater than $5 are the toy boat, toy guitar, set of juggling balls, trivia game, and jigsaw puzzle.
df_corrected = df[df['Toy'].isin([
    'toy boat',
    'toy guitar',
    'set of juggling balls',
    'trivia game',
    'jigsaw puzzle'
])]
# Summing the prices
total_corrected = df_corrected['Price'].sum()
# Counting the number of toys
count_corrected = len(df_corrected)
# Calculating the average
ans = total_corrected / count_corrected
'''}
"""


T2SQL_FEW_SHOT = """\
Read the following table and then write SQL code to answer the question:

-- Table: coin_collection
-- Columns:
--   Name (TEXT)
--   Number_of_coins (INTEGER)
--
-- Rows:
--   Braden | 76
--   Camilla | 94
--   Rick | 86
--   Mary | 84
--   Hector | 80
--   Devin | 83
--   Emily | 82
--   Avery | 87

Question: Some friends discussed the sizes of their coin collections. What is the mean of the numbers?
## Return a query for the 'SQL code' with one key: code. Respond using JSON only.

{'code' : '''
SELECT AVG(Number_of_coins) AS answer
FROM coin_collection;
'''}

Read the following table and then write SQL code to answer the question:

-- Table: market
-- Columns:
--   Price (INTEGER)
--   Quantity_demanded (INTEGER)
--   Quantity_supplied (INTEGER)
--
-- Rows:
--   155 | 22600 | 5800
--   275 | 20500 | 9400
--   395 | 18400 | 13000
--   515 | 16300 | 16600
--   635 | 14200 | 20200

Question: Look at the table. Then answer the question. At a price of $155, is there a shortage or a surplus?
## Return a query for the 'SQL code' with one key: code. Respond using JSON only.

{'code' : '''
SELECT
  CASE
    WHEN Quantity_demanded > Quantity_supplied THEN 'shortage'
    ELSE 'surplus'
  END AS answer
FROM market
WHERE Price = 155;
'''}

Read the following table and then write SQL code to answer the question:

-- Table: can_collection
-- Columns:
--   Name (TEXT)
--   Cans_collected (INTEGER)
--
-- Rows:
--   Samir | 7
--   Kristen | 4
--   Dakota | 7
--   Jamie | 8
--   Maggie | 9

Question: Samir's class recorded how many cans of food each student collected for their canned food drive. What is the median of the numbers?
## Return a query for the 'SQL code' with one key: code. Respond using JSON only.

{'code' : '''
SELECT PERCENTILE_CONT(0.5) WITHIN GROUP (ORDER BY Cans_collected) AS answer
FROM can_collection;
'''}

Read the following table and then write SQL code to answer the question:

-- Table: toys
-- Columns:
--   Toy (TEXT)
--   Price (DECIMAL)
--
-- Rows:
--   toy boat | 5.54
--   toy guitar | 8.23
--   set of juggling balls | 5.01
--   trivia game | 8.18
--   jigsaw puzzle | 5.30
--   toy dinosaur | 3.00

Question: Lorenzo has $13.50. Does he have enough to buy a toy guitar and a set of juggling balls?
## Return a query for the 'SQL code' with one key: code. Respond using JSON only.

{'code' : '''
SELECT
  CASE
    WHEN SUM(Price) <= 13.50 THEN 'yes'
    ELSE 'no'
  END AS answer
FROM toys
WHERE Toy IN ('toy guitar', 'set of juggling balls');
'''}
"""


SDA_FEW_SHOT = """\
You are an expert in reviewing and correcting SQL code designed to solve questions about tables.
Review the query, the previous SQL code written to address it, and its execution results to identify any parts that need correction.

### query
Read the following table and then write SQL code to answer a question:

-- Table: toys
-- Columns:
--   Toy (TEXT)
--   Price (DECIMAL)
--
-- Rows:
--   toy boat | 5.54
--   toy guitar | 8.23
--   set of juggling balls | 5.01
--   trivia game | 8.18
--   jigsaw puzzle | 5.30
--   toy dinosaur | 3.00

Question: What is the average price of toys that cost more than $5?
## Return a query for the 'SQL code' with one key: code. Respond using JSON only.

### Previous Code:
-- The following 4 toys are included:
SELECT AVG(Price) AS ans
FROM toys
WHERE Toy IN ('toy boat', 'toy guitar', 'set of juggling balls', 'toy dinosaur');

### Previous Execution Result:
5.445

### Return a query for 'corrected SQL code' with one key: code. Respond using JSON only.
{'code' : '''
-- The toys that will actually be included among those priced greater than $5 are:
-- toy boat, toy guitar, set of juggling balls, trivia game, jigsaw puzzle.
SELECT AVG(Price) AS ans
FROM toys
WHERE Price > 5;
'''}
"""


FM_FEW_SHOT = """\
You are a helpful AI that extracts the key entities from a specific sentence.
For a given question, someone has provided an answer.
However, the answer is too long and verbose, so you need to condense it into a few short entities. Summarize the answer into a few words as entities.

## Return a query for the solution and answer with two keys: Justification and Answer. Respond using JSON only.
- Question: Which country had the highest British exports in 1950, and how does it compare to its British exports in 1942?
- Answer: Sweden had the highest British exports in 1950 with 165.5 million Pounds, which was 72.3 million Pounds higher than its 1942 value of 93.2 million Pounds.
## Return the final output strictly in the following JSON format.
{'Extracted_Answer' : 'Sweden, 72.3'}
"""


JUDGE_HEADER = """\
You are an expert judge for table question answering.
Review the table, the question and the candidate answers produced by different reasoning methods, then decide the single best final answer.
"""


def dataframe_preamble(table: Table) -> str:
    """Render the table as the pandas setup block used in PoT prompts.

    Numeric columns render as bare number lists, text columns as quoted
    strings; nulls become empty strings.
    """
    types = infer_column_types(table)
    lines = ["import pandas as pd", "data = {"]
    for idx, column in enumerate(table.columns):
        rendered = []
        for row in table.rows:
            cell = row[idx]
            if is_missing(cell):
                rendered.append("''")
            elif types[idx] in (INTEGER, DECIMAL):
                rendered.append(format_number(convert_cell(cell, types[idx])))
            else:
                rendered.append(repr(render_cell(cell)))
        comma = "," if idx < table.n_cols - 1 else ""
        lines.append(f"    {column!r}: [{', '.join(rendered)}]{comma}")
    lines.append("}")
    lines.append("df = pd.DataFrame(data)")
    return "\n".join(lines)


def sql_schema_comment(table: Table) -> str:
    """Render the table as the commented schema block used in SQL prompts.

    Always targets the canonical relation name so generated queries stay
    executable regardless of the few-shot table names.
    """
    names = sanitize_headers(table.columns)
    types = infer_column_types(table)
    lines = [f"-- Table: {SQL_RELATION_NAME}", "-- Columns:"]
    for name, ctype in zip(names, types):
        lines.append(f"--   {name} ({SQL_TYPE_NAMES[ctype]})")
    lines.append("--")
    lines.append("-- Rows:")
    for row in table.rows:
        cells = [
            render_cell(convert_cell(cell, types[idx]))
            for idx, cell in enumerate(row)
        ]
        lines.append("--   " + " | ".join(cells))
    return "\n".join(lines)


def build_cot_query(table: Table, question: Question) -> str:
    return (
        "Read the following table and then write solution texts to answer a question:\n"
        f"{table_to_markdown(table)}\n\n"
        f"Question: {question.text}\n"
        "## Return a query for the solution and answer with two keys: solution and answer. "
        "Respond using JSON only."
    )


def build_cot_prompt(table: Table, question: Question) -> str:
    return COT_FEW_SHOT + "\n" + build_cot_query(table, question)


def build_pot_query(table: Table, question: Question) -> str:
    return (
        "Read the following table and then write Python code with pandas to answer a question:\n\n"
        f"{dataframe_preamble(table)}\n\n"
        f"Question: {question.text}\n"
        "## You don't need to reprint pre-written code like 'import pandas as pd', "
        "'data = {...}', or 'df = pd.DataFrame(data)'. That code will be provided "
        "separately, so just give me the code that processes 'data' and 'df'.\n"
        "## Return a query for the 'python code with pandas which return ans' with one key: code. "
        "Respond using JSON only."
    )


def build_pot_prompt(table: Table, question: Question) -> str:
    return POT_FEW_SHOT + "\n" + build_pot_query(table, question)


def build_sql_query(table: Table, question: Question) -> str:
    return (
        "Read the following table and then write SQL code to answer the question:\n\n"
        f"{sql_schema_comment(table)}\n\n"
        f"Question: {question.text}\n"
        "## Return a query for the 'SQL code' with one key: code. Respond using JSON only."
    )


def build_sql_prompt(table: Table, question: Question) -> str:
    return T2SQL_FEW_SHOT + "\n" + build_sql_query(table, question)


def build_pot_debug_prompt(
    table: Table, question: Question, code: str, execution_result: str
) -> str:
    return (
        PDA_FEW_SHOT
        + "\n### query\n"
        + build_pot_query(table, question)
        + "\n\n### Previous Code:\n"
        + code
        + "\n\n### Previous Execution Result:\n"
        + execution_result
        + "\n\n### Return a query for 'corrected python code with pandas which return ans' "
        "with one key: code. Respond using JSON only. (You must return the value with 'ans')"
    )


def build_sql_debug_prompt(
    table: Table, question: Question, code: str, execution_result: str
) -> str:
    return (
        SDA_FEW_SHOT
        + "\n### query\n"
        + build_sql_query(table, question)
        + "\n\n### Previous Code:\n"
        + code
        + "\n\n### Previous Execution Result:\n"
        + execution_result
        + "\n\n### Return a query for 'corrected SQL code' with one key: code. "
        "Respond using JSON only."
    )


def build_fm_prompt(question: Question, long_answer: str) -> str:
    return (
        FM_FEW_SHOT
        + "\n## Return a query for the solution and answer with two keys: Justification and Answer. "
        "Respond using JSON only.\n"
        f"- Question : {question.text}\n"
        f"- Answer : {long_answer}\n"
        "## Return the final output strictly in the following JSON format."
    )


def _judge_code_section(
    label: str, trace: Optional[ReasoningTrace], candidate: AnswerCandidate
) -> str:
    lines = [f"### {label}"]
    if candidate.is_nothing or trace is None:
        lines.append(NOTHING)
        return "\n".join(lines)
    # Last two iterations bound the prompt size while keeping the diff the
    # debug agent acted on visible.
    for code, result in trace.iterations[-2:]:
        lines.append("Code:")
        lines.append(code)
        lines.append(f"Execution result: {result.payload}")
    lines.append(f"Answer: {candidate.raw}")
    return "\n".join(lines)


def build_judge_prompt(
    table: Table,
    question: Question,
    traces: Mapping[ReasoningPath, Optional[ReasoningTrace]],
    candidates: CandidateSet,
    scores: Optional[Sequence[tuple[str, float]]] = None,
) -> str:
    sections = [JUDGE_HEADER]
    sections.append(table_to_markdown(table))
    sections.append(f"Question: {question.text}")
    cot_trace = traces.get(ReasoningPath.COT)
    cot_lines = ["### CoT"]
    if candidates.cot.is_nothing or cot_trace is None or cot_trace.solution_text is None:
        cot_lines.append(NOTHING)
    else:
        cot_lines.append(f"Solution: {cot_trace.solution_text}")
        cot_lines.append(f"Answer: {candidates.cot.raw}")
    sections.append("\n".join(cot_lines))
    sections.append(
        _judge_code_section("PoT", traces.get(ReasoningPath.POT), candidates.pot)
    )
    sections.append(
        _judge_code_section("text2SQL", traces.get(ReasoningPath.TEXT2SQL), candidates.sql)
    )
    if scores is not None:
        rendered = ", ".join(f"{name}={value:.4f}" for name, value in scores)
        sections.append(f"Confidence scores: {rendered}")
    sections.append(
        "## Return the final answer with one key: answer. Respond using JSON only."
    )
    return "\n\n".join(sections)
