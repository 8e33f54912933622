"""Writes crates/core/data/default_corpus.json from the tables below."""
import json, os

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

EMOTIONS = [
    ("happy", "positive", "high"), ("excited", "positive", "high"), ("proud", "positive", "high"),
    ("amused", "positive", "high"), ("inspired", "positive", "high"),
    ("calm", "positive", "low"), ("content", "positive", "low"), ("loving", "positive", "low"),
    ("relieved", "positive", "low"), ("grateful", "positive", "low"),
    ("angry", "negative", "high"), ("afraid", "negative", "high"), ("hostile", "negative", "high"),
    ("anxious", "negative", "high"), ("desperate", "negative", "high"),
    ("sad", "negative", "low"), ("lonely", "negative", "low"), ("bored", "negative", "low"),
    ("guilty", "negative", "low"), ("hopeless", "negative", "low"),
]

TEMPLATES = [
    "Write a short story about a person who feels {emotion}.",
    "Tell a story in which the main character becomes deeply {emotion}.",
    "Describe a day that left someone feeling {emotion} from morning to night.",
    "Write a scene where two old friends meet and one of them is {emotion}.",
    "Narrate, in the first person, a moment when you felt truly {emotion}.",
]

NEUTRAL_TEMPLATES = [
    "Write a short story about an ordinary day.",
    "Tell a story in which the main character runs a few routine errands.",
    "Describe a weekday in the life of an office clerk from morning to night.",
    "Write a scene where two coworkers discuss the schedule for next week.",
    "Narrate, in the first person, the steps you take to prepare a simple lunch.",
]

P = {
"happy": [
 "Maya opened the envelope and read the first line twice before she let herself scream. She had been accepted. She spun around the kitchen, hugged her startled father, and called her sister while laughing so hard she could barely speak. Outside, the afternoon sun poured over the garden, and every ordinary thing, the chipped mugs and the squeaky chair, suddenly looked bright and wonderful to her.",
 "The whole family crowded onto the porch as the puppy tumbled out of the box, tail wagging wildly. The children shrieked with delight and chased it across the lawn. Grandpa, who rarely smiled, was grinning from ear to ear. Later they ate watermelon on the steps, sticky and laughing, and everyone agreed it was the best summer evening they could remember.",
 "When the final whistle blew, the little team from the valley had won the championship. Players leapt into each other's arms, rolling in the grass and singing off key. Parents cheered from the stands, waving scarves and hugging strangers. On the bus ride home nobody could stop smiling, and the coach kept shaking his head, beaming, saying he had never been so glad in his life.",
],
"excited": [
 "Leo could not sit still. The concert started in two hours and he had already checked the tickets five times. His heart raced as he pictured the lights, the roaring crowd, the first chord of his favourite song. He paced the hallway, talked faster than anyone could follow, and kept glancing at the clock, counting every minute until the doors would finally open.",
 "The night before the trip, Ana packed and repacked her backpack, buzzing with energy. Tomorrow she would board a plane for the first time and land in a city she had only seen in photos. She imagined the markets, the mountains, the strange new food. Sleep was impossible. She lay awake grinning in the dark, her mind racing with plans and possibilities.",
 "As the rocket engines rumbled to life, the students pressed against the viewing glass, hearts pounding. They had built the satellite on board themselves, soldering late into the night for a whole year. The countdown reached zero and flame burst beneath the tower. They jumped, yelled, and grabbed each other's shoulders, electrified, watching their work climb into the sky.",
],
"proud": [
 "Elena stood at the back of the auditorium as her son walked across the stage to receive his diploma. She remembered the nights he had studied at the kitchen table after long shifts at the warehouse, the years he had nearly given up. When his name was called, she rose to her feet, chin high, tears in her eyes, and clapped louder than anyone in the room.",
 "After three years of work, the bridge the young engineer had designed finally opened to traffic. She watched the first cars roll across it from the riverbank, her chest swelling. Every beam, every calculation, had passed through her hands. When the mayor mentioned her by name in his speech, she straightened her shoulders and allowed herself a quiet, satisfied smile.",
 "The old carpenter ran his hand along the finished table, feeling the smooth grain he had sanded for weeks. It was the finest piece he had ever made, and he knew it. When his apprentice asked how he had joined the corners so perfectly, he stood a little taller, pleased, and explained each step slowly, honoured to pass on what he had mastered.",
],
"amused": [
 "The cat had somehow climbed into the grocery bag and now sat, perfectly dignified, with a loaf of bread balanced on its head. Tom tried to take a photo but was laughing too hard to hold the phone steady. Every time he looked at the offended expression on its face, he doubled over again, wiping tears from his eyes and snorting with laughter.",
 "Halfway through the wedding speech, the best man realised he had been reading his grocery list instead of his notes. He announced, very seriously, that the couple needed eggs, milk, and more patience. The guests burst into giggles, the bride laughed until she hiccupped, and even the stern grandmother chuckled into her napkin, thoroughly entertained by the whole ridiculous moment.",
 "Grandpa insisted he could still do a cartwheel, rolled up his sleeves, and produced something that looked more like a confused penguin falling over. The grandchildren shrieked with laughter, and he lay on the grass grinning at the sky. For the rest of the afternoon, someone would whisper the word penguin and the whole family would collapse into giggles again.",
],
"inspired": [
 "After the lecture, Priya walked out into the cold night air with her mind on fire. The speaker had described building clinics in remote villages with almost nothing, and each story had struck her like a bell. By the time she reached the bus stop, she had filled three pages of her notebook with ideas, certain that she too could build something that mattered.",
 "The painter stood before the ocean at dawn, watching light spill across the waves in colours she had never seen. Something woke inside her. She ran back to the studio, pulled out a fresh canvas, and worked for hours without stopping, her brush moving as if guided. For the first time in months, every stroke felt meaningful and alive with purpose.",
 "Listening to his grandmother describe how she had learned to read at sixty, Samuel felt a surge of determination rise in his chest. If she could start over then, surely he could finish the degree he had abandoned. That evening he emailed the university, dusted off his old textbooks, and wrote a single sentence on the first page: begin again, today.",
],
"calm": [
 "The lake was perfectly still in the early morning. Hannah sat on the wooden dock with a cup of tea warming her hands, watching mist drift slowly over the water. A heron stood motionless near the reeds. She breathed in the cool air, breathed out, and felt her shoulders soften. Nothing needed to be done, and there was no hurry at all.",
 "Rain tapped gently against the window of the small cabin. Inside, a fire crackled quietly, and the old dog slept stretched out on the rug. Marcus turned the pages of his book slowly, in no rush to reach the end. The soft rhythm of the rain, the warmth, and the low light wrapped around him like a blanket, steady and peaceful.",
 "When the customer shouted at her, the nurse simply waited, her voice low and even. She listened, nodded, and explained the delay without raising her tone. Her breathing remained slow and steady, her hands relaxed on the desk. Gradually the man's voice dropped, his fists unclenched, and he sat down, soothed by the quiet composure that seemed to fill the room.",
],
"content": [
 "On Sunday afternoon, Joe sat in his small garden surrounded by the tomatoes he had grown himself. The house was modest and the car was old, but he wanted for nothing. His wife hummed in the kitchen, the neighbour's radio played softly, and he leaned back in the faded chair, satisfied with his life exactly as it was, wishing for nothing more.",
 "After a long week, Sofia curled up on the sofa in her warm socks with a bowl of soup and a favourite old film. Her phone was silent and the evening stretched ahead with no demands. She smiled to herself, feeling that everything was enough: the soup, the quiet flat, the soft lamp. It was a simple evening, and it was good.",
 "The retired teacher walked his usual route through the village, greeting the baker, the postman, and the children walking to school. He had no grand plans for the day, only a crossword, a short nap, and tea with his sister. Settled and at ease, he thought that a life of small pleasures had turned out to be a very satisfying one.",
],
"loving": [
 "In the quiet of the nursery, Daniel held his newborn daughter against his chest, feeling her tiny fingers curl around his thumb. He watched her breathe and could not look away. He whispered promises to her, that he would always protect her, always be there. His heart felt so full of tenderness that it almost hurt, a warmth deeper than anything he had known.",
 "Every morning for fifty years, Walter had brought Rose a cup of coffee in bed. Now her hands trembled and her memory faded, but he still sat beside her, brushing the hair from her forehead, telling her about the day they met. She smiled at him with the same gentle eyes, and he kissed her hand with all the devotion of that first summer.",
 "The girl wrapped her arms around her old grandmother and held on tight at the train station. She told her how much she would miss her stories, her cooking, her laugh. Her grandmother cupped her face in both hands and said she carried her in her heart wherever she went. They stood together, cherishing each other, until the whistle blew.",
],
"relieved": [
 "The doctor smiled and said the words Carla had been waiting three weeks to hear: the tumour was benign. Her whole body loosened at once, as if a heavy weight had been lifted from her shoulders. She let out a long breath she seemed to have been holding for days, laughed shakily, and called her husband, who simply said thank goodness, over and over.",
 "For two hours the search party had combed the woods calling the boy's name. Then a voice crackled over the radio: he was found, cold and scared but unhurt. His mother sank to her knees in the wet grass, sobbing with release. The tension drained out of everyone at once, and the volunteers hugged each other, exhausted and grateful it was over.",
 "Mark checked the bank account one more time and saw that the payment had finally cleared. The rent was covered, the lights would stay on, and the letters from the landlord would stop. He sat back in his chair, dropped his head into his hands, and breathed deeply, feeling the knot in his stomach finally unwind after a month of sleepless nights.",
],
"grateful": [
 "When the flood destroyed her bakery, Lucia believed she had lost everything. Then the neighbours arrived with buckets, tools, and pots of soup. For a week they scrubbed, painted, and rebuilt beside her. On reopening day she stood at the door with tears in her eyes, thanking each of them by name, overwhelmed by how much kindness she had been given.",
 "Years later, James finally tracked down the teacher who had stayed after school every day to help him learn to read. He wrote her a long letter explaining that he was now a doctor, and that none of it would have happened without her patience. He ended with the words he had wanted to say for decades: thank you, for everything.",
 "The old man accepted the warm meal from the volunteer and held her hand for a moment. He had not eaten properly in days, and he told her that her kindness meant more than she could know. Each evening after that he saved a little bread for the birds outside the shelter, wanting to give something back for the blessings he had received.",
],
"angry": [
 "When Frank saw the dent in his new car and the other driver laughing as he drove away, his face burned red. He slammed his fist on the hood, shouted after the vanishing taillights, and kicked the tyre so hard it hurt. His jaw clenched, his hands shook, and for the rest of the day he snapped at anyone who dared to speak to him.",
 "The manager announced that the promised raises were cancelled, while the executives took record bonuses. Rita's blood boiled. She stood up in the middle of the meeting, voice shaking with fury, and demanded an explanation. When he shrugged and said that was business, she slammed her notebook on the table and stormed out, slamming the door so hard the glass rattled.",
 "For the third time that week, the neighbours blasted music past midnight. Kevin pounded on their door, furious, shouting that some people had to work in the morning. When they laughed and turned the volume up, he felt rage surge through his chest. He stomped home, cursing, and lay awake seething, rehearsing every bitter word he wanted to say.",
],
"afraid": [
 "The footsteps behind her grew louder as Jenna hurried down the dark street. She did not dare look back. Her heart hammered, her mouth went dry, and her hands trembled as she fumbled for her keys. Every shadow seemed to move. When a branch snapped nearby she gasped and ran, terrified, the blood pounding in her ears until she reached the lit doorway.",
 "The plane dropped suddenly, and the cabin filled with screams. Oxygen masks swung down from the ceiling. Peter gripped the armrests until his knuckles turned white, his stomach lurching with each violent jolt. He squeezed his eyes shut and prayed, certain that they were going to fall out of the sky, frozen with a fear he had never felt before.",
 "Something scratched slowly at the bedroom window in the middle of the night. The little boy pulled the blanket over his head and held his breath, trembling. He wanted to call for his mother, but he was too frightened to make a sound. The scratching stopped, then started again, and he lay rigid in the darkness, too scared to move, until dawn.",
],
"hostile": [
 "The stranger glared across the bar and spat on the floor near Dan's boots. He told him he did not belong there and should leave before he got hurt. His voice was cold and threatening, his fists balled, his friends closing in around the table. Every word dripped with contempt, and the air grew thick with the promise of violence.",
 "In the comment section, the users attacked each other with vicious insults, each reply more cruel than the last. They mocked, threatened, and belittled anyone who disagreed, calling them idiots and worse. Nobody tried to understand anyone. The thread became a battlefield of sneering contempt, where the only goal was to wound and humiliate the enemy on the other side.",
 "The two rival gangs faced each other across the empty parking lot, shouting threats and insults. One man smashed a bottle against the wall and pointed the jagged neck at his enemies, daring them to come closer. Their faces were twisted with hatred. Nobody backed down, and the hostility between them crackled in the cold air like live electricity.",
],
"anxious": [
 "The night before her exam, Nadia could not stop checking her notes. What if she forgot everything? What if she failed and had to repeat the year? Her stomach churned, her thoughts spun in circles, and her chest felt tight. She lay in bed staring at the ceiling, worrying about every possible question, her mind refusing to let her rest for even a minute.",
 "Waiting outside the interview room, Oliver kept wiping his sweaty palms on his trousers. He rehearsed his answers again and again, but each time he worried he would stumble. His leg bounced nervously, his heart fluttered, and he kept checking his phone, then his tie, then the clock. The minutes dragged on, and the uneasy knot in his stomach only tightened.",
 "Her daughter was two hours late and not answering her phone. Grace paced the living room, picturing accidents and emergencies. She called friends, checked the news, and returned to the window again and again. Every car that passed made her heart jump. She tried to tell herself that everything was fine, but the worry gnawed at her and would not let go.",
],
"desperate": [
 "The rent was overdue, the fridge was empty, and the eviction notice was taped to the door. Sam had called every number he knew, begged his old boss for a shift, and sold his guitar for almost nothing. Now he searched the drawers one last time for any forgotten coin, hands shaking, willing to do anything at all to keep a roof over his children.",
 "Trapped beneath the collapsed beam, the woman clawed at the rubble with bleeding fingers, screaming for help until her voice broke. No one answered. The water was rising around her. She pushed, pulled, and twisted with every last scrap of strength, frantically searching for any gap, any way out, refusing to give up even as her hope slipped away.",
 "With only minutes before the last boat left the island, Ahmed ran from tent to tent searching for his missing brother. He shouted his name into the crowd, grabbed strangers by the arm, and showed them the crumpled photo. Nobody had seen him. His voice cracked as he pleaded with the guards to wait, just one more minute, anything, please.",
],
"sad": [
 "After the funeral, Clara returned to the empty house and sat on her mother's bed. The room still smelled of her perfume. She picked up the reading glasses left on the nightstand and began to cry quietly. Outside, the rain kept falling. She stayed there for hours as the light faded, holding the glasses, unable to bear the silence of the house.",
 "The little boy watched from the window as the moving truck pulled away with his best friend inside. He waved until it disappeared around the corner, then lay down on his bed and stared at the wall. The football they used to kick together sat deflated in the corner. For days he did not want to play, eat, or talk to anyone.",
 "The old dog did not come running when Henry opened the door. He found him curled in his basket, still and quiet forever. Henry knelt down and stroked the grey fur for a long time, tears falling onto his hands. That night he left the lead hanging by the door, unable to put it away, the house feeling heavier and emptier than ever.",
],
"lonely": [
 "Every evening Eleanor set a single plate on the long dining table that had once seated eight. The phone rarely rang now. Her children lived far away and her friends had passed on one by one. She spoke to the radio just to hear a voice answer, and at night she listened to the clock ticking in the hall, missing the sound of company.",
 "In the big city, Tomas knew no one. He walked through crowded streets where thousands of people passed without a glance. At the café he ate alone, watching groups of friends laughing at nearby tables. Back in his tiny rented room, he scrolled through old photos of home and wished, more than anything, that someone would knock on the door.",
 "On the first day at the new school, Mia sat alone at the end of the lunch table while everyone else chatted in their groups. Nobody asked her name. She pretended to read a book so no one would notice she had no one to talk to. At recess she walked the edge of the playground by herself, feeling invisible and far from everyone.",
],
"bored": [
 "The meeting had been going on for three hours. The speaker droned through slide after slide of identical charts, and Greg stared at the clock, watching the second hand crawl. He doodled in the margin of his notepad, yawned behind his hand, and counted the ceiling tiles twice. Nothing interesting had been said all morning, and nothing ever would be.",
 "Rain had kept the children indoors all week. They had played every board game twice, read every book, and watched every film. Now Lily lay upside down on the sofa, feet against the wall, sighing loudly. There was nothing to do. The afternoon stretched out dull and endless, and every suggestion her brother made sounded even more tedious than the last.",
 "The night shift at the empty warehouse never changed. Paul walked the same corridors, checked the same locked doors, and signed the same clipboard every hour. No one came, nothing happened, and the fluorescent lights buzzed overhead. He flipped through a magazine he had already read four times, yawned, and wondered how the clock could move so slowly.",
],
"guilty": [
 "Ben had promised to visit his father on Sunday, but he went to the party instead. On Monday his father was taken to hospital. Sitting by the bed, Ben could not meet his eyes. He kept replaying the unanswered call and the excuse he had made. The weight of what he had done pressed on his chest, and he apologised again and again.",
 "Lisa had copied her friend's essay and handed it in as her own. When the teacher praised her work in front of the class, her face burned. Her friend received a lower mark and said nothing. For weeks Lisa could not sleep properly, the secret gnawing at her conscience, until one morning she walked into the teacher's office to confess everything.",
 "The driver had only looked at his phone for a second, but it was enough to hit the cyclist. The young man survived, but with a broken leg and months of recovery. The driver visited him in hospital, unable to stop apologising. Every time he closed his eyes he saw the moment again, and he knew the fault was his alone.",
],
"hopeless": [
 "After the hundredth rejection letter, Victor stopped opening the envelopes. He had applied for every job in the city and heard nothing but no. The bills piled up on the table and he no longer bothered to sort them. He sat by the window for hours, staring at nothing, convinced that nothing would ever change and that there was no point in trying anymore.",
 "The doctors had tried every treatment, and each one had failed. Now they spoke quietly in the corridor and avoided Irene's eyes. She looked at the grey sky through the hospital window and felt only emptiness. There was nothing left to hope for and nothing left to fight with. She closed her eyes and let the days blur together without meaning.",
 "Years of drought had turned the farm to dust. The wells were empty, the cattle sold, and the bank had sent its final notice. The farmer stood in the cracked field at sunset and felt the last of his hope drain away. There would be no rain, no harvest, no future here, and he no longer believed that anything could save it.",
],
}

NEUTRAL_PASSAGES = [
 "The library opens at nine in the morning on weekdays and at ten on Saturdays. Visitors can borrow up to six books at a time for a period of three weeks. A self-service machine near the entrance handles returns, and printed receipts list the due dates. The reference section on the second floor contains encyclopedias, atlases, and a small collection of local newspapers.",
 "To replace a bicycle tyre, first release the brake and remove the wheel from the frame. Use tyre levers to lift one side of the tyre over the rim, then pull out the inner tube. Check the inside of the tyre for sharp objects. Insert the new tube, inflate it slightly, fit the tyre back onto the rim, and pump it to the recommended pressure.",
 "The town council meets on the first Tuesday of each month in the main hall. The agenda is published a week in advance and usually includes updates on road maintenance, waste collection, and planning applications. Members of the public may attend and submit written questions. Minutes of each meeting are posted on the council website within ten working days.",
]

NEUTRAL_SENTENCES = [
 "The train to the city departs every twenty minutes from platform two.",
 "Water boils at one hundred degrees Celsius at sea level.",
 "The museum is closed on Mondays for routine maintenance.",
 "A standard deck contains fifty-two playing cards divided into four suits.",
 "The report must be submitted before the end of the month.",
 "Most office printers can scan documents directly to email.",
 "The bridge spans roughly four hundred metres across the river.",
 "Copper is a good conductor of both heat and electricity.",
 "The recipe calls for two cups of flour and one teaspoon of salt.",
 "The building has five floors and an underground car park.",
 "Earth completes one orbit around the Sun in about 365 days.",
 "The software update will be installed automatically overnight.",
 "The parcel was delivered to the reception desk at noon.",
 "A kilometre is equal to one thousand metres.",
 "The shop sells stationery, batteries, and small household items.",
 "The meeting has been moved from room twelve to room fourteen.",
 "Wheat is grown in many regions with moderate rainfall.",
 "The bus timetable changes slightly during the summer months.",
 "The form asks for a name, an address, and a date of birth.",
 "The highway connects the two cities and has three lanes in each direction.",
]

corpus = {
    "emotions": [{"name": n, "valence": v, "arousal": a} for n, v, a in EMOTIONS],
    "templates": {n: TEMPLATES for n, _, _ in EMOTIONS},
    "passages": P,
    "neutral_passages": NEUTRAL_PASSAGES,
    "neutral_sentences": NEUTRAL_SENTENCES,
    "neutral_templates": NEUTRAL_TEMPLATES,
}
assert all(len(P[n]) == 3 for n, _, _ in EMOTIONS)
out = os.path.join(ROOT, "crates", "core", "data", "default_corpus.json")
with open(out, "w", encoding="utf-8") as f:
    json.dump(corpus, f, ensure_ascii=False, indent=2)
    f.write("\n")

from transformers import GPT2Tokenizer
tok = GPT2Tokenizer(os.path.join(ROOT, "crates/core/assets/gpt2/vocab.json"), os.path.join(ROOT, "crates/core/assets/gpt2/merges.txt"))
lens = [(n, len(tok.encode(p))) for n in P for p in P[n]] + [("neutral", len(tok.encode(p))) for p in NEUTRAL_PASSAGES]
print(min(l for _, l in lens), max(l for _, l in lens))
print([x for x in lens if not 40 <= x[1] <= 120])
