// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/scenario.hpp>

#include <algorithm>
#include <random>

#include <fmt/format.h>

namespace tmlpred::scenario
{

std::string_view to_string(Scenario s) noexcept
{
    switch (s)
    {
        case Scenario::S1: return "S1";
        case Scenario::S2: return "S2";
        case Scenario::S3: return "S3";
        case Scenario::S4: return "S4";
        case Scenario::S5: return "S5";
    }
    return "S?";
}

Scenario scenario_from_string(std::string_view name)
{
    auto const folded = text::fold(name);
    for (auto s: all_scenarios)
        if (folded == text::to_lower(to_string(s)))
            return s;
    throw InputError(fmt::format("unknown scenario '{}'", name));
}

Json TmlQuery::to_json() const
{
    return {
        {"task", std::string(task_id(task))},
        {"model_family", model_family ? Json(*model_family) : Json(nullptr)},
        {"language", language ? Json(*language) : Json(nullptr)},
        {"query_type", std::string(tmlpred::to_string(query_type))},
        {"candidates", candidates},
        {"text", text},
    };
}

TmlQuery TmlQuery::from_json(const Json& doc)
{
    if (!doc.is_object() || !doc.contains("task"))
        throw InputError("query must be an object with at least 'task'");
    TmlQuery q;
    q.task = task_from_string(doc["task"].get<std::string>());
    auto optional_text = [&](const char* key) -> std::optional<std::string> {
        if (!doc.contains(key) || doc[key].is_null())
            return std::nullopt;
        auto value = text::trim(doc[key].get<std::string>());
        if (value.empty())
            return std::nullopt;
        return value;
    };
    q.model_family = optional_text("model_family");
    q.language = optional_text("language");
    q.query_type = query_type_from_string(doc.value("query_type", std::string("numeric")));
    q.candidates = doc.value("candidates", std::vector<std::string> {});
    q.text = doc.value("text", std::string {});
    return q;
}

Scenario classify(Task task,
                  std::string_view language,
                  std::string_view family,
                  const corpus::CorpusView& reduced,
                  const langsim::SimilaritySplit& split)
{
    if (reduced.role() != corpus::ViewRole::ReducedOnly)
        throw InputError("scenarios are classified against the reduced corpus view");

    if (reduced.pair_observed(task, language, family))
        return Scenario::S1;
    if (reduced.language_observed(task, language))
        return Scenario::S2;
    if (!reduced.family_observed(task, family))
        return Scenario::S5;

    if (!split.has_vector(language))
        throw InputError(fmt::format("language '{}' has no typological vector; cannot tell S3 from S4", language));

    // Nearest observed language for the family; ties go to the smaller code
    // because languages_for_family is ordered.
    std::optional<double> nearest;
    for (auto const& observed: reduced.languages_for_family(task, family))
    {
        auto const d = split.distance(language, observed);
        if (d && (!nearest || *d < *nearest))
            nearest = d;
    }
    if (!nearest)
        throw InputError(fmt::format("language '{}' is not comparable with any language observed for '{}'", language,
                                     family));
    return langsim::classify_distance(*nearest, split.tau()) == langsim::Proximity::Close ? Scenario::S3
                                                                                          : Scenario::S4;
}

Scenario classify_query(const TmlQuery& query, const corpus::CorpusView& reduced, const langsim::SimilaritySplit& split)
{
    if (!query.language || !query.model_family)
        throw InputError("classification needs both a language and a model family");
    return classify(query.task, *query.language, *query.model_family, reduced, split);
}

namespace
{
struct TemplateSpec
{
    std::string_view text;
    std::size_t models;
    std::size_t languages;
};

// Template 3 originally ends in a period; it is rephrased so every
// question ends with "?".
constexpr std::array<TemplateSpec, template_count> templates {{
    {"What is the performance of {model} on {task} for {language}?", 1, 1},
    {"How does {model} perform on {task} in {language}?", 1, 1},
    {"Comparing {model1} and {model2} performance for {language} on {task}, which is higher?", 2, 1},
    {"Which model performs best for {task} in {language}?", 0, 1},
    {"What are the {task} results for {model} across all languages?", 1, 0},
    {"How does {language} performance vary across models for {task}?", 0, 1},
    {"What languages show the best performance for {task}?", 0, 0},
    {"Which models have been evaluated for {task} in {language}?", 0, 1},
    {"What is the cross-lingual performance of {model} on {task}?", 1, 0},
    {"How do low-resource languages perform on {task}?", 0, 0},
}};

constexpr std::array<int, 2> numeric_templates {1, 2};
constexpr int comparative_single_template = 4;
constexpr int comparative_pair_template = 3;
} // namespace

std::string render_question(int template_id,
                            Task task,
                            std::span<const std::string> models,
                            std::span<const std::string> languages)
{
    if (template_id < 1 || template_id > template_count)
        throw InputError(fmt::format("unknown question template {}", template_id));
    auto const& spec = templates[static_cast<std::size_t>(template_id - 1)];
    if (models.size() < spec.models)
        throw InputError(fmt::format("template {} needs {} model(s), got {}", template_id, spec.models, models.size()));
    if (languages.size() < spec.languages)
        throw InputError(fmt::format("template {} needs {} language(s), got {}", template_id, spec.languages,
                                     languages.size()));

    std::map<std::string, std::string> values {{"task", std::string(task_display_name(task))}};
    if (!models.empty())
        values["model"] = models[0];
    if (models.size() >= 2)
    {
        values["model1"] = models[0];
        values["model2"] = models[1];
    }
    if (!languages.empty())
        values["language"] = languages[0];
    return text::substitute(spec.text, values);
}

std::string format_list(std::vector<std::string> items)
{
    for (auto& item: items)
        item = text::trim(item);
    std::erase_if(items, [](auto const& item) { return item.empty(); });
    std::sort(items.begin(), items.end(), [](auto const& a, auto const& b) {
        FoldLess less;
        if (less(a, b))
            return true;
        if (less(b, a))
            return false;
        return a < b;
    });
    items.erase(std::unique(items.begin(), items.end()), items.end());
    return text::join(items, ",");
}

TmlQuery Question::to_query() const
{
    TmlQuery q;
    q.task = task;
    q.query_type = query_type;
    q.text = complete_question;
    q.language = ground_truth_ref.language;
    if (query_type == QueryType::NumericPrediction && !ground_truth_ref.families.empty())
        q.model_family = ground_truth_ref.families.front();
    if (query_type == QueryType::ComparativeReasoning)
        q.candidates = ground_truth_ref.families;
    return q;
}

Json Question::to_json() const
{
    return {
        {"id", id},
        {"complete_question", complete_question},
        {"task", std::string(task_display_name(task))},
        {"models", models},
        {"languages", languages},
        {"query_type", std::string(tmlpred::to_string(query_type))},
        {"scenario", std::string(to_string(scenario))},
        {"ground_truth_ref", ground_truth_ref.to_json()},
        {"template_id", template_id},
        {"target", {{"language", target_language}, {"family", target_family}}},
        {"duplicate", duplicate},
    };
}

Question Question::from_json(const Json& doc)
{
    Question q;
    q.id = doc.value("id", std::string {});
    q.complete_question = doc.at("complete_question").get<std::string>();
    q.task = task_from_string(doc.at("task").get<std::string>());
    q.models = doc.value("models", std::string {});
    q.languages = doc.value("languages", std::string {});
    q.query_type = query_type_from_string(doc.at("query_type").get<std::string>());
    q.scenario = scenario_from_string(doc.at("scenario").get<std::string>());
    q.ground_truth_ref = metrics::GroundTruthRef::from_json(doc.at("ground_truth_ref"));
    q.template_id = doc.value("template_id", 1);
    if (doc.contains("target"))
    {
        q.target_language = doc["target"].value("language", std::string {});
        q.target_family = doc["target"].value("family", std::string {});
    }
    q.duplicate = doc.value("duplicate", false);
    return q;
}

Question make_question(int template_id,
                       Task task,
                       std::vector<std::string> models,
                       std::vector<std::string> languages,
                       const corpus::LanguageTable& names)
{
    std::vector<std::string> display;
    display.reserve(languages.size());
    for (auto const& code: languages)
        display.push_back(names.display(code));

    Question q;
    q.template_id = template_id;
    q.task = task;
    q.complete_question = render_question(template_id, task, models, display);
    auto const& spec = templates[static_cast<std::size_t>(template_id - 1)];
    models.resize(std::min(models.size(), spec.models));
    display.resize(std::min(display.size(), spec.languages));
    q.models = format_list(std::move(models));
    q.languages = format_list(std::move(display));
    return q;
}

namespace
{
void add_numeric(CandidateSpace& space, Scenario s, std::string language, std::string family)
{
    space.numeric[static_cast<std::size_t>(s) - 1].push_back({std::move(language), std::move(family)});
}

std::optional<Scenario> try_classify(Task task,
                                     const std::string& language,
                                     const std::string& family,
                                     const GeneratorInputs& in)
{
    try
    {
        return classify(task, language, family, in.reduced, in.split);
    }
    catch (const InputError&)
    {
        // No typological vector: the pair cannot be placed in S3 or S4.
        return std::nullopt;
    }
}

std::uint64_t block_seed(std::uint64_t seed, Task task, Scenario s)
{
    auto const tag = fmt::format("{}:{}", task_id(task), to_string(s));
    return text::fnv1a(tag, seed ^ 0x9e3779b97f4a7c15ull);
}

template <typename T>
void shuffle_deterministic(std::vector<T>& items, std::mt19937_64& rng)
{
    // Fisher-Yates on raw engine output; std::shuffle's use of distributions is
    // implementation-defined and would break cross-platform reproducibility.
    for (std::size_t i = items.size(); i > 1; --i)
    {
        auto const j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}
} // namespace

CandidateSpace enumerate_candidates(Task task, const GeneratorInputs& in)
{
    CandidateSpace space;
    auto const* mapping = in.combined.mapping(task);
    if (!mapping)
        return space;

    for (auto const& [language, families]: mapping->entries)
    {
        std::vector<std::string> family_names;
        for (auto const& [family, records]: families)
        {
            family_names.push_back(family);
            metrics::GroundTruthRef ref {task, QueryType::NumericPrediction, language, {family}, std::nullopt};
            try
            {
                metrics::ground_truth(ref, in.combined, in.registry);
            }
            catch (const NotFoundError&)
            {
                continue;
            }
            if (auto s = try_classify(task, language, family, in))
                add_numeric(space, *s, language, family);
        }

        auto add_comparative = [&](std::vector<std::string> candidates, std::size_t min_scored) {
            metrics::GroundTruthRef ref {task, QueryType::ComparativeReasoning, language, candidates, std::nullopt};
            try
            {
                auto const gt = metrics::ground_truth(ref, in.combined, in.registry);
                if (gt.candidate_scores.size() < min_scored)
                    return;
                if (auto s = try_classify(task, language, *gt.answer_label, in))
                    space.comparative[static_cast<std::size_t>(*s) - 1].push_back(
                        {language, std::move(candidates), *gt.answer_label});
            }
            catch (const NotFoundError&)
            {
            }
        };

        add_comparative({}, 1);
        for (std::size_t i = 0; i < family_names.size(); ++i)
            for (std::size_t j = i + 1; j < family_names.size(); ++j)
                add_comparative({family_names[i], family_names[j]}, 2);
    }
    return space;
}

QuestionBlock build_blocks(const BlockRequest& request, const GeneratorInputs& in)
{
    auto const space = enumerate_candidates(request.task, in);
    auto const index = static_cast<std::size_t>(request.scenario) - 1;
    auto numeric = space.numeric[index];
    auto comparative = space.comparative[index];

    if ((request.n_numeric > 0 && numeric.empty()) || (request.n_comparative > 0 && comparative.empty()))
        throw InputError(fmt::format("scenario not instantiable: {} {}", task_id(request.task),
                                     to_string(request.scenario)));

    std::mt19937_64 rng(block_seed(request.seed, request.task, request.scenario));
    shuffle_deterministic(numeric, rng);
    shuffle_deterministic(comparative, rng);

    QuestionBlock block;
    block.task = request.task;
    block.scenario = request.scenario;

    auto const prefix = fmt::format("{}-{}", task_id(request.task), to_string(request.scenario));
    for (std::size_t i = 0; i < request.n_numeric; ++i)
    {
        auto const& c = numeric[i % numeric.size()];
        auto const template_id = numeric_templates[rng() % numeric_templates.size()];
        auto q = make_question(template_id, request.task, {c.family}, {c.language}, in.names);
        q.id = fmt::format("{}-n{:02}", prefix, i + 1);
        q.query_type = QueryType::NumericPrediction;
        q.scenario = request.scenario;
        q.ground_truth_ref = {request.task, QueryType::NumericPrediction, c.language, {c.family}, std::nullopt};
        q.target_language = c.language;
        q.target_family = c.family;
        q.duplicate = i >= numeric.size();
        block.exhausted = block.exhausted || q.duplicate;
        block.questions.push_back(std::move(q));
    }
    for (std::size_t i = 0; i < request.n_comparative; ++i)
    {
        auto const& c = comparative[i % comparative.size()];
        Question q;
        if (c.families.empty())
        {
            q = make_question(comparative_single_template, request.task, {}, {c.language}, in.names);
        }
        else
        {
            q = make_question(comparative_pair_template, request.task, c.families, {c.language}, in.names);
        }
        q.id = fmt::format("{}-c{:02}", prefix, i + 1);
        q.query_type = QueryType::ComparativeReasoning;
        q.scenario = request.scenario;
        q.ground_truth_ref = {request.task, QueryType::ComparativeReasoning, c.language, c.families, std::nullopt};
        q.target_language = c.language;
        q.target_family = c.answer;
        q.duplicate = i >= comparative.size();
        block.exhausted = block.exhausted || q.duplicate;
        block.questions.push_back(std::move(q));
    }
    return block;
}

std::vector<std::string> check_instantiability(const corpus::EvidenceCorpus& corpus,
                                               const langsim::SimilaritySplit& split,
                                               const metrics::MetricRegistry& registry)
{
    // Non-owning handle: the corpus outlives this call.
    std::shared_ptr<const corpus::EvidenceCorpus> handle(std::shared_ptr<void> {}, &corpus);
    corpus::CorpusView combined(handle, corpus::ViewRole::Combined);
    corpus::CorpusView reduced(handle, corpus::ViewRole::ReducedOnly);
    corpus::LanguageTable names;
    GeneratorInputs in {combined, reduced, split, registry, names};

    std::vector<std::string> problems;
    for (auto const& [task, mapping]: corpus.combined())
    {
        auto const space = enumerate_candidates(task, in);
        for (auto s: all_scenarios)
        {
            auto const i = static_cast<std::size_t>(s) - 1;
            if (space.numeric[i].empty())
                problems.push_back(fmt::format("{} {}: no numeric target", task_id(task), to_string(s)));
            if (space.comparative[i].empty())
                problems.push_back(fmt::format("{} {}: no comparative target", task_id(task), to_string(s)));
        }
    }
    return problems;
}

corpus::InstantiabilityCheck instantiability_check(const langsim::SimilaritySplit& split,
                                                   const metrics::MetricRegistry& registry)
{
    return [&split, &registry](const corpus::EvidenceCorpus& corpus) {
        return check_instantiability(corpus, split, registry);
    };
}

} // namespace tmlpred::scenario
