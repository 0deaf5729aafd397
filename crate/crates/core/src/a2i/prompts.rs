//! Prompt templates for the three workflow stages and the fine-tune tasks.
//!
//! Templates are reproduced byte-for-byte, including stray whitespace,
//! doubled braces and the missing comma in one answer format, because
//! downstream models were tuned on exactly this text.

use crate::annotator::AnchorPlaces;
use crate::data::{IntentStats, PoiVisitStats, StayRecord};
use crate::error::{invalid, Result};
use crate::intent::Intent;

use super::{InsightSet, PromptVariant};

const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

pub fn render_feature_prompt(stats: &IntentStats) -> String {
    let mut p = String::new();
    p.push_str(
        "Your task is to extract the features of intent 'At Home', 'Working', 'Running errands' \
         from the statistical data. Please think step by step.\n       \n",
    );
    p.push_str("Here's the statistical data of the user's intent distribution:{");
    p.push_str(&stats.to_py_repr());
    p.push_str("}\n\n");
    p.push_str(
        "The meanings of statistical data are as follows:\n\
         - Percentage Distribution: The percent of the intent in the whole dataset.\n\
         - Time Distribution: The start_time distribution of visits to the POI with the intent, \
         in the format of (start hour: percentage).\n\n",
    );
    p.push_str(&format!(
        "There are 6 intents in total: {}, each intent has a percentage distribution and a time \
         distribution.\n\n",
        Intent::prompt_choice_list()
    ));
    p.push_str(
        "Instruction:\n\
         - You need to extract the unique and prominent features of intent 'At Home', 'Working', \
         'Running errands' which can distinguish them from other intents.\n\
         - Each intent should have about 6-8 features.\n\
         - Should be based on the percentage distribution, and time distribution of the intent.\n\
         - Should be able to help identify the user's home, work place, and running errands place.\n\
         - Some features need to be specificity to the intent, such as the time distribution of \
         the intent.\n\n",
    );
    p.push_str("Answer using the following JSON format:\n{{\n\"features\": [\"features of 'intents'\"],\n}}");
    p
}

const HWI_OPENING: &str = "Your objective is to identify the potential 'home,' and 'work' places of a \
user's intent based on their trajectory data and the features associated with the intents 'At Home' \
and 'Working'. Please think step by step.\n";

/// HWI prompt. Without insights this is the feature-ablated template, which
/// also differs in indentation and has the comma after "work place".
pub fn render_hwi_prompt(poi_stats: &PoiVisitStats, insights: Option<&InsightSet>) -> String {
    let mut p = String::from(HWI_OPENING);
    match insights {
        Some(insights) => {
            p.push_str("                           \n");
            p.push_str(&format!(
                "The trajectory data under analysis is as follows: {{{}}}\n        \n",
                poi_stats.to_py_repr()
            ));
            p.push_str(
                "The meaning of each element in the trajectory data is as follows:\n    \
                 - Name: the POI the user visited.\n    \
                 - Percent: The percentage of times the behavior pattern occurred\n    \
                 - Time Distribution: the start time distribution of the number of visits to the \
                 POI, in the format of (start hour: percentage).\n\n",
            );
            p.push_str(&format!(
                "Here are the general and unique features of intent 'At Home' , 'Working' , \
                 'Running errands':{{{}}}\n\n",
                insights.to_pretty_json()
            ));
            p.push_str(
                "Respond using the following JSON format:\n{{\n    \"home\": \"home place\",\n    \
                 \"work\": \"work place\"\n    \"reason\": \"reason for prediction\"\n}}",
            );
        }
        None => {
            p.push_str("               \n");
            p.push_str(&format!(
                "The trajectory data under analysis is as follows: {{{}}}\n\n",
                poi_stats.to_py_repr()
            ));
            p.push_str(
                "The meaning of each element in the trajectory data is as follows:\n\
                 - Name: the POI the user visited.\n\
                 - Percent: The percentage of times the behavior pattern occurred\n\
                 - Time Distribution: the start time distribution of number of visits to the POI, \
                 in the format of (start hour: percentage).\n\n",
            );
            p.push_str(
                "Respond using the following JSON format:\n{{\n\"home\": \"home place\",\n\
                 \"work\": \"work place\",\n\"reason\": \"reason for prediction\"\n}}",
            );
        }
    }
    p
}

/// `(name, start, end)` per stay, end omitted when unknown.
pub fn trajectory_tuples(day: &[StayRecord]) -> String {
    day.iter()
        .map(|s| match s.departure_time {
            Some(d) => format!(
                "({}, {}, {})",
                s.poi_name,
                s.arrival_time.format(TIME_FORMAT),
                d.format(TIME_FORMAT)
            ),
            None => format!("({}, {})", s.poi_name, s.arrival_time.format(TIME_FORMAT)),
        })
        .collect()
}

const INTENT_STEPS: &str = "Your task is to give intent prediction using trajectory data. Let's think \
step by step.\n\n\
1. Analyze the user's behavior pattern based on the trajectory data.\n\
2. Consider and think about the name of the POI and the time distribution of visits to the POI with \
the intent. (This is the trajectory of one person, so thinking about the user's daily routine is \
important.)\n\
3. Based on the user's behavior pattern and please consider the features of intent 'At Home', \
'Working', 'Running errands', predict the intent of each stay in the trajectory data.\n\n";

const INTENT_ELEMENTS: &str = "Each stay in trajectory data is represented as (poi, start time).\n\n\
Here's what each element means:\n\
- poi: the POI the user visited.\n\
- start time: the time the user arrived at the POI.\n\n\
Please judge the function of POI based on its name, time distribution, and features provided. You \
should take the meaning of each intent as reference, but the final judgment shouldn't be fully rely \
on that.\n\n";

const INTENT_ANSWER: &str = "Consider step by step, finally respond using the following JSON format \
(Make sure to have one predicted intent for each stay in the trajectory data, And you have to assign \
one of the intents to each stay in the trajectory data):\n\
{{\n\"predicted_intent\": [\"adjusted predicted intents\"],\n}}";

/// Daily intent prompt. A2I and NFE share the anchored template; NHWI drops
/// the anchor definitions; ZS uses the short zero-shot template. Missing
/// anchors under A2I/NFE drop their definition line; at least one anchor is
/// required.
pub fn render_intent_prompt(
    day: &[StayRecord],
    anchors: &AnchorPlaces,
    variant: PromptVariant,
) -> Result<String> {
    if day.is_empty() {
        return Err(invalid("intent prompt needs at least one stay"));
    }
    let k = day.len();
    let tuples = trajectory_tuples(day);
    let choices = Intent::prompt_choice_list();
    if variant == PromptVariant::Zs {
        return Ok(format!(
            "Your task is to give intent prediction using trajectory data. \n        \n\
             The trajectory data under analysis is as follows: {{{tuples}}}.\n\n\
             Each stay in trajectory data is represented as (poi, start time).\n\n\
             Here's what each element means:\n    \
             - POI: the POI the user visited.\n    \
             - Start Time: the time the user arrived at the POI.\n\n\
             Intent you can choose:{choices}\n\n\
             There are {{{k}}} stays in the trajectory data. So make sure the output should only \
             have {{{k}}} predicted intents.\n\n\
             Respond using the following JSON format to provide the predicted intents:\n\
             {{{{\n\"predicted_intent\": [\"adjusted predicted intents\"],\n}}}}"
        ));
    }
    let mut p = String::from(INTENT_STEPS);
    p.push_str(&format!(
        "The trajectory data under analysis is as follows: {{{tuples}}}.\n\n"
    ));
    p.push_str(INTENT_ELEMENTS);
    p.push_str(&format!("Intent you can choose:{choices}\n\n"));
    match variant {
        PromptVariant::Nhwi => {
            if anchors.home.is_some() || anchors.work.is_some() {
                log::debug!("NHWI intent prompt ignores supplied anchors");
            }
        }
        _ => {
            if anchors.home.is_none() && anchors.work.is_none() {
                return Err(invalid(format!(
                    "{variant} intent prompt needs at least one anchor place"
                )));
            }
            p.push_str("Here's what each intent means:\n");
            if let Some(home) = &anchors.home {
                p.push_str(&format!(
                    "- At Home: When the user is at {{{}}}, it is mostly considered as being at \
                     home. And Other places are NOT considered as home! \n",
                    home.poi_name
                ));
            }
            if let Some(work) = &anchors.work {
                p.push_str(&format!(
                    "- Working: When the user is at {{{}}}, it is mostly considered as working. And \
                     Other places are NOT considered as working!\n",
                    work.poi_name
                ));
            }
            p.push_str(
                "But, you should still consider the user's behavior pattern, POI_name, and the \
                 time the user visited the POI.\n\n",
            );
        }
    }
    p.push_str(
        "Note: If multiple conditions are met, priority should be given to 'At Home' and 'Running \
         Errands'.\n\n",
    );
    p.push_str(&format!(
        "There are {{{k}}} stays in the trajectory data. So, the output should have {{{k}}} \
         predicted intents.\n\n"
    ));
    p.push_str(INTENT_ANSWER);
    Ok(p)
}

/// Fine-tune task 1: anchor identification from POI statistics and the
/// home/work insights.
pub fn render_task1_prompt(poi_stats: &PoiVisitStats, insights: &InsightSet) -> String {
    format!(
        "Your task is to identify the user's home and work place based on the trajectory data and \
         the features of intent 'At Home' and 'Working'.\n\
         The trajectory data under analysis is as follows: {}\n\
         Each entry represents a POI-intent pair that the user has visited.\n    \
         The meanings of each feature are as follows:\n\
         - Name: POI name\n\
         - Percent: The percentage of times the behavior pattern occurred\n\
         - Time Distribution: The time distribution of visits to the POI with the intent, in the \
         format of (hour, percentage).\n\
         Here are the features of intent 'At Home' and 'Working':{}\n\
         Respond using the following JSON format:\n\
         {{\"home\": \"home place\",\"work\": \"work place\"}}",
        poi_stats.to_py_repr(),
        insights.home_work_py_repr()
    )
}

/// Fine-tune task 2: per-stay intents for one day with hard anchor rules.
pub fn render_task2_prompt(day: &[StayRecord], home: &str, work: &str) -> Result<String> {
    if day.is_empty() {
        return Err(invalid("task-2 prompt needs at least one stay"));
    }
    let k = day.len();
    let tuples: String = day
        .iter()
        .map(|s| {
            format!(
                "({}, {}, {})",
                s.poi_name,
                s.category,
                s.arrival_time.format(TIME_FORMAT)
            )
        })
        .collect();
    Ok(format!(
        "Your task is to give intent prediction using trajectory data. Stay in trajectory data \
         corresponds one by one to intent.\n\
         The trajectory data under analysis is as follows: {tuples}.\n\
         Each stay in trajectory data is represented as (poi, category of poi, start time).\n\
         Here's what each element means:\n    \
         - poi: the POI the user visited.\n\
         - category of poi: category the POI belongs to.\n\
         - start time: the time the user arrived at the POI.\n\
         Please mainly judge the function of POI based on its name. The POI category can be used \
         to assist in judgment.\n\
         Intent you can choose:{choices}\n\
         Here's what each intent means:\n\
         - At Home: When the user is at {home}, it is always considered as being at home, \
         regardless of the time and POI category. When the user is at other places, it is not \
         considered as being at home.\n\
         - Working: When the user is at {work}, it is always considered as working, regardless of \
         the time and POI category. When the user is at other places, it is not considered as \
         working.\n\
         - Running errands: When the user is not at {home} or {work}, and the POI is unlikely to \
         be a place for shopping, entertainment or eating, it is considered as running errands.\n\
         Note: If multiple conditions are met, priority should be given to 'At Home' and \
         'Working'.\n    \
         There are {k} stays in the trajectory data. So, the output should have {k} predicted \
         intents.\n\
         Respond using a list: [\"intent1\", \"intent2\" ...]",
        choices = Intent::prompt_choice_list()
    ))
}
