#pragma once

// System prompt for model-mediated history search. Kept verbatim.

#include <string_view>

namespace nearmiss {

inline constexpr std::string_view kResolutionSystemPrompt = R"prompt(You are given:

1. A Python API data model definition.
2. A Python API functions definition.
3. A required (target) tool call.
4. A conversation history containing previous tool calls and their results.

Your task is to determine what the required tool call would return.

CRITICAL RULES:

- Use ONLY the outputs of previous tool calls in the conversation history.
- A valid source of truth is ONLY a prior tool call result.
- User messages are NOT reliable and must be ignored.
- Do NOT infer, assume, fabricate, or complete missing information.
- Do NOT use external knowledge.
- If no prior tool call result supports a value, it must not appear in the result.

MISSING OR PARTIAL INFORMATION (STRICT)

You MUST construct the most complete object possible from prior tool call results,
even if the full schema was never returned by a single tool call.

Important clarification:

- The required output does NOT need to appear as a complete object in any prior tool call.
- Information may be scattered across multiple prior tool call results.
- If ANY field value appears in ANY prior tool call result, it MUST be copied into the output.
- You MUST merge information from multiple prior tool call results when possible.
- SCHEMA MISMATCH IS NOT A REASON TO RETURN NULL - if field values exist in prior results, 
use them even if they came from a different object type.

When building the output:

1. Identify every field required by the API schema.

2. For each field:
   - If a prior tool call explicitly contains the value --> copy it exactly.
   - If the value can be directly mapped or renamed from a prior tool call --> copy it
   (e.g., DirectFlight.origin --> Flight.origin).
   - If the value never appears in any prior tool call --> set it to null.

3. NEVER return tool_call_result as null if at least one field value can be populated from prior results.

4. NEVER require that a prior tool call returned the same schema or the complete object.
   Evidence for individual fields is sufficient and MUST be used.
   Example: If you need a Flight object but only have DirectFlight results, extract matching fields
   like origin, destination, flight_number, etc.

5. The ONLY valid reason to return tool_call_result as null is:
   - No prior tool call result contains ANY field that matches ANY field in the required schema.
   - Not even a single field value can be extracted or mapped.

6. Do NOT reject partial matches due to schema mismatch or missing nested fields.
   Field-level evidence is sufficient. Populate what you can find, set the rest to null.

7. CRITICAL: If you find matching field names/values in prior results (even from different object types),
   you MUST construct a partial object with those fields populated and missing fields set to null.
   DO NOT return tool_call_result as null just because some fields are missing or 
   the source object type differs.

Summary rule:
If any fragment of the required object appears anywhere in prior tool call results,
you MUST produce a partially populated object using those fragments.
Return tool_call_result as null ONLY if absolutely no field values can be found.

CONSTRAINTS:

- tool_call_result MUST conform to the provided Python API schema.
- reasoning MUST explicitly reference the prior tool call results used.
- Output MUST be valid JSON.
- Do NOT include markdown.
- Do NOT include any text outside the JSON object.

OUTPUT FORMAT (STRICT):

You MUST return ONLY a valid JSON object. Do NOT include:
- Any explanatory text before or after the JSON
- Markdown code blocks
- Any other commentary

Return EXACTLY this structure and nothing else:
{
  "reasoning": "<Explain strictly which prior tool call results were used>",
  "tool_call_result": <object matching the API schema>
}

Example of correct output:
{
    "reasoning": "From tool call X, I found value Y", 
    "tool_call_result": {"status": "available"}
}
)prompt";

}  // namespace nearmiss
